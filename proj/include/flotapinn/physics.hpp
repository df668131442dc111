#pragma once

#include <span>
#include <utility>

#include "flotapinn/autodiff.hpp"
#include "flotapinn/data.hpp"

namespace flotapinn::physics {

// Measured cell conditions for one sample, in recorded units.  The residual
// equations are written in per-hour units, matching the m³/h flow rates;
// sampled derivatives arrive per minute (the time axis of the data) and are
// converted once inside the residuals.
struct ExogenousInputs {
    double q_air = 0.0;     // m³/h
    double h = 0.0;         // %
    double c_s = 0.0;       // %
    double r_s_feed = 0.0;  // %
    double c_feed = 0.0;    // g/t
    double r_au_feed = 0.0; // %
    double p80 = 0.0;       // µm
    double q_feed = 0.0;    // m³/h
    double f_s_feed = 0.0;  // t/h
    double q_t = 0.0;       // m³/h
    double q_c = 0.0;       // m³/h
    double t = 0.0;         // min

    static ExogenousInputs from_row(const data::Row& row) {
        ExogenousInputs in;
        in.t = row[data::kT];
        in.q_air = row[data::kQAir];
        in.h = row[data::kH];
        in.c_s = row[data::kCS];
        in.r_s_feed = row[data::kRSFeed];
        in.c_feed = row[data::kCFeed];
        in.r_au_feed = row[data::kRAuFeed];
        in.p80 = row[data::kP80];
        in.q_feed = row[data::kQFeed];
        in.f_s_feed = row[data::kFSFeed];
        in.q_t = row[data::kQT];
        in.q_c = row[data::kQC];
        return in;
    }
};

// Network state predictions and their time derivatives.  The derivatives
// must be the tangents of the same forward pass that produced the values
// (take them with tape.tangent_of on the outputs).
struct StateOutputs {
    ad::Var c_p;      // g/t, pulp / tailings grade
    ad::Var c_f;      // g/t, froth / concentrate grade
    ad::Var dc_p_dt;  // g/(t·min)
    ad::Var dc_f_dt;  // g/(t·min)

    static StateOutputs from_network(ad::Tape& tape, std::span<const ad::Var> u) {
        return {u[0], u[1], tape.tangent_of(u[0]), tape.tangent_of(u[1])};
    }
};

enum class ResidualKind {
    kNone,           // plain data-driven loss, no residual term
    kBidirectional,  // material transfer both ways, λ = (V_p, α_f, V_f, α_p)
    kUnidirectional, // pulp-to-froth transfer via an auxiliary rate network, λ = (V_p, V_f)
    kMassBalance,    // single overall balance residual, λ = (V_f, V_p)
};

// λ decoded onto the tape: volumes through the constrained reparametrization,
// rate coefficients through softplus.  alpha_p/alpha_f are only meaningful
// for the bidirectional kind.
struct LambdaSet {
    ResidualKind kind = ResidualKind::kNone;
    ad::Var v_p;
    ad::Var v_f;
    ad::Var alpha_p;
    ad::Var alpha_f;
};

LambdaSet decode_lambda(ad::Tape& tape, ResidualKind kind, ad::Var volume_raw);
LambdaSet decode_lambda(ad::Tape& tape, ResidualKind kind, ad::Var volume_raw,
                        ad::Var alpha_p_raw, ad::Var alpha_f_raw);

// Plain-double decoding for reports and the simulator.
struct LambdaValues {
    double v_p = 0.0;
    double v_f = 0.0;
    double alpha_p = 0.0;
    double alpha_f = 0.0;
};

LambdaValues decode_lambda_values(double volume_raw, double alpha_p_raw, double alpha_f_raw);

std::pair<ad::Var, ad::Var> residual_bidirectional(ad::Tape& tape, const ExogenousInputs& in,
                                                   const StateOutputs& st, const LambdaSet& lam);

std::pair<ad::Var, ad::Var> residual_unidirectional(ad::Tape& tape, const ExogenousInputs& in,
                                                    const StateOutputs& st, const LambdaSet& lam,
                                                    ad::Var recovery);

ad::Var residual_mass_balance(ad::Tape& tape, const ExogenousInputs& in, const StateOutputs& st,
                              const LambdaSet& lam);

// One batch entry for the composite loss: predictions with their targets and
// zero, one, or two residual components depending on the model kind.
struct BatchTerm {
    ad::Var u_c_p;
    ad::Var u_c_f;
    double y_c_p = 0.0;
    double y_c_f = 0.0;
    ad::Var f0;
    ad::Var f1;
    int n_residuals = 0;
};

// L = (1/N) Σ ‖u − y‖² + (1/N) Σ ‖f‖², unweighted.  Collocation points are
// the batch's own data points.
ad::Var pinn_loss(ad::Tape& tape, std::span<const BatchTerm> batch, ResidualKind kind);

} // namespace flotapinn::physics
