#include "flotapinn/physics.hpp"

#include <string>

#include "flotapinn/errors.hpp"
#include "flotapinn/nn.hpp"

namespace flotapinn::physics {

namespace {

constexpr double kMinutesPerHour = 60.0;

void require_kind(const LambdaSet& lam, ResidualKind kind, const char* where) {
    if (lam.kind != kind)
        throw UsageError(std::string(where) + ": lambda set decoded for a different model kind");
}

} // namespace

LambdaSet decode_lambda(ad::Tape& tape, ResidualKind kind, ad::Var volume_raw) {
    if (kind == ResidualKind::kBidirectional)
        throw UsageError("decode_lambda: bidirectional kind needs alpha raw parameters");
    LambdaSet lam;
    lam.kind = kind;
    auto [v_f, v_p] = nn::constrained_volumes(tape, volume_raw);
    lam.v_f = v_f;
    lam.v_p = v_p;
    return lam;
}

LambdaSet decode_lambda(ad::Tape& tape, ResidualKind kind, ad::Var volume_raw,
                        ad::Var alpha_p_raw, ad::Var alpha_f_raw) {
    LambdaSet lam;
    lam.kind = kind;
    auto [v_f, v_p] = nn::constrained_volumes(tape, volume_raw);
    lam.v_f = v_f;
    lam.v_p = v_p;
    lam.alpha_p = tape.softplus(alpha_p_raw);
    lam.alpha_f = tape.softplus(alpha_f_raw);
    return lam;
}

LambdaValues decode_lambda_values(double volume_raw, double alpha_p_raw, double alpha_f_raw) {
    const auto vol = nn::constrained_volumes(volume_raw);
    return {vol.v_p, vol.v_f, nn::softplus(alpha_p_raw), nn::softplus(alpha_f_raw)};
}

std::pair<ad::Var, ad::Var> residual_bidirectional(ad::Tape& tape, const ExogenousInputs& in,
                                                   const StateOutputs& st, const LambdaSet& lam) {
    require_kind(lam, ResidualKind::kBidirectional, "residual_bidirectional");
    const double q_air = in.q_air;
    const double q_feed = in.q_feed;
    const double q_t = in.q_t;
    const double q_c = in.q_c;
    // Flows are m³/h, so the equations live in per-hour units; the sampled
    // derivatives are per minute and convert here.
    ad::Var dc_p = tape.scale(st.dc_p_dt, kMinutesPerHour);
    ad::Var dc_f = tape.scale(st.dc_f_dt, kMinutesPerHour);

    // f_Cp = dC_p/dt − C_feed·q_feed/V_p − α_f·q_air·C_f·V_f/V_p
    //        + (α_p·q_air + q_t/V_p)·C_p
    ad::Var feed_term = (in.c_feed * q_feed) / lam.v_p;
    ad::Var froth_return = tape.scale(lam.alpha_f * st.c_f, q_air) * lam.v_f / lam.v_p;
    ad::Var pulp_exit = (tape.scale(lam.alpha_p, q_air) + q_t / lam.v_p) * st.c_p;
    ad::Var f_cp = dc_p - feed_term - froth_return + pulp_exit;

    // f_Cf = dC_f/dt − α_p·q_air·C_p·V_p/V_f + (α_f·q_air + q_c/V_f)·C_f
    ad::Var pulp_gain = tape.scale(lam.alpha_p * st.c_p, q_air) * lam.v_p / lam.v_f;
    ad::Var froth_exit = (tape.scale(lam.alpha_f, q_air) + q_c / lam.v_f) * st.c_f;
    ad::Var f_cf = dc_f - pulp_gain + froth_exit;

    return {f_cp, f_cf};
}

std::pair<ad::Var, ad::Var> residual_unidirectional(ad::Tape& tape, const ExogenousInputs& in,
                                                    const StateOutputs& st, const LambdaSet& lam,
                                                    ad::Var recovery) {
    require_kind(lam, ResidualKind::kUnidirectional, "residual_unidirectional");
    const double q_feed = in.q_feed;
    const double q_t = in.q_t;
    const double q_c = in.q_c;
    ad::Var dc_p = tape.scale(st.dc_p_dt, kMinutesPerHour);
    ad::Var dc_f = tape.scale(st.dc_f_dt, kMinutesPerHour);

    // f_Cp = dC_p/dt − C_feed·q_feed/V_p + q_t·C_p/V_p + R/V_p, R in g/h
    ad::Var f_cp = dc_p - (in.c_feed * q_feed) / lam.v_p +
                   tape.scale(st.c_p, q_t) / lam.v_p + recovery / lam.v_p;

    // f_Cf = dC_f/dt + q_c·C_f/V_f − R/V_f
    ad::Var f_cf = dc_f + tape.scale(st.c_f, q_c) / lam.v_f - recovery / lam.v_f;

    return {f_cp, f_cf};
}

ad::Var residual_mass_balance(ad::Tape& tape, const ExogenousInputs& in, const StateOutputs& st,
                              const LambdaSet& lam) {
    require_kind(lam, ResidualKind::kMassBalance, "residual_mass_balance");
    const double q_feed = in.q_feed;
    const double q_t = in.q_t;
    const double q_c = in.q_c;
    ad::Var dc_p = tape.scale(st.dc_p_dt, kMinutesPerHour);
    ad::Var dc_f = tape.scale(st.dc_f_dt, kMinutesPerHour);

    // λ₁ = V_f, λ₂ = V_p:
    // f = dC_f/dt − q_feed·C_feed/V_f + q_c·C_f/V_f + q_t·C_p/V_f + dC_p/dt·V_p/V_f
    return dc_f - (q_feed * in.c_feed) / lam.v_f + tape.scale(st.c_f, q_c) / lam.v_f +
           tape.scale(st.c_p, q_t) / lam.v_f + dc_p * lam.v_p / lam.v_f;
}

ad::Var pinn_loss(ad::Tape& tape, std::span<const BatchTerm> batch, ResidualKind kind) {
    if (batch.empty())
        throw UsageError("pinn_loss: empty batch");

    int want_residuals = 0;
    switch (kind) {
    case ResidualKind::kNone: want_residuals = 0; break;
    case ResidualKind::kMassBalance: want_residuals = 1; break;
    case ResidualKind::kBidirectional:
    case ResidualKind::kUnidirectional: want_residuals = 2; break;
    }

    ad::Var acc_u = tape.lift(0.0);
    ad::Var acc_f = tape.lift(0.0);
    for (const BatchTerm& term : batch) {
        if (term.n_residuals != want_residuals)
            throw UsageError("pinn_loss: residual arity does not match the model kind");
        ad::Var du_p = tape.shift(term.u_c_p, -term.y_c_p);
        ad::Var du_f = tape.shift(term.u_c_f, -term.y_c_f);
        acc_u = tape.mul_add(du_p, du_p, acc_u);
        acc_u = tape.mul_add(du_f, du_f, acc_u);
        if (want_residuals >= 1) acc_f = tape.mul_add(term.f0, term.f0, acc_f);
        if (want_residuals == 2) acc_f = tape.mul_add(term.f1, term.f1, acc_f);
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    if (want_residuals == 0) return tape.scale(acc_u, inv_n);
    return tape.scale(acc_u, inv_n) + tape.scale(acc_f, inv_n);
}

} // namespace flotapinn::physics
