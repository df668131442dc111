#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace flotapinn::ad {

class Tape;

// Handle to one node on a Tape.  Cheap to copy; stays valid until the owning
// tape is truncated past the node or cleared.
class Var {
public:
    Var() = default;

    double value() const;
    double tangent() const;
    double adjoint() const;          // d loss / d value, after backward()
    double tangent_adjoint() const;  // d loss / d tangent, after backward()

    std::int32_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr && id_ >= 0; }

private:
    friend class Tape;
    Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::int32_t id_ = -1;
};

// Append-only scalar computation graph.
//
// Each node holds a dual number (value, tangent).  Tangents are seeded on
// leaves (lift with tangent 1 marks the variable we differentiate along,
// i.e. time) and propagate forward through every operation as it is
// recorded.  tangent_of() re-enters a node's tangent as a first-class value,
// which is how a time derivative becomes part of a loss expression.
//
// backward() runs reverse accumulation over both channels at once: every
// node carries an adjoint for its value and one for its tangent, so a loss
// that consumes tangents still yields exact parameter gradients.
class Tape {
public:
    using Checkpoint = std::size_t;

    Tape() = default;
    explicit Tape(std::size_t reserve_nodes) { reserve(reserve_nodes); }

    void reserve(std::size_t nodes);

    // Creates an independent input node.
    Var lift(double value, double tangent = 0.0);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);          // throws TapeError if b's value is zero
    Var mul_add(Var a, Var b, Var addend);  // a * b + addend, one node
    Var neg(Var a);
    Var scale(Var a, double k);     // k * a
    Var shift(Var a, double k);     // a + k
    Var rcp_scale(double k, Var a); // k / a, throws TapeError if a's value is zero
    Var tanh(Var a);
    Var softplus(Var a);            // log(1 + exp(a)), overflow-safe
    Var sigmoid(Var a);             // composed as 0.5 + 0.5 * tanh(0.5 a)

    // Lifts a node's tangent into a value node (its own tangent is zero).
    Var tangent_of(Var a);

    // Reverse pass seeded with d loss / d loss = 1.  Resets all adjoints
    // first; reading adjoints is only meaningful after this call.
    void backward(Var loss);

    // Adjoints of the given nodes, in order.  Call after backward().
    std::vector<double> gradient(std::span<const Var> nodes) const;

    std::size_t size() const { return op_.size(); }
    Checkpoint checkpoint() const { return op_.size(); }

    // Drops every node recorded after the checkpoint; the node count is
    // exactly the count captured when the checkpoint was taken.
    void truncate(Checkpoint mark);

    void clear() { truncate(0); }

    double value_at(std::int32_t id) const { return val_[check_id(id)]; }
    double tangent_at(std::int32_t id) const { return tan_[check_id(id)]; }
    double adjoint_at(std::int32_t id) const { return adj_val_[check_id(id)]; }
    double tangent_adjoint_at(std::int32_t id) const { return adj_tan_[check_id(id)]; }

private:
    enum class Op : std::uint8_t {
        kLeaf,
        kAdd,
        kSub,
        kMul,
        kMulAdd,
        kDiv,
        kRcpScale,
        kNeg,
        kScale,
        kShift,
        kTanh,
        kSoftplus,
        kTangent,
    };

    Var push(Op op, std::int32_t a, std::int32_t b, std::int32_t c, double k,
             double value, double tangent);
    std::int32_t operand(Var v) const;
    std::size_t check_id(std::int32_t id) const;

    // Structure-of-arrays node storage.  k_ carries the constant of
    // scale/shift/rcp_scale and caches the sigmoid factor for softplus.
    std::vector<Op> op_;
    std::vector<std::int32_t> a_, b_, c_;
    std::vector<double> k_;
    std::vector<double> val_, tan_;
    std::vector<double> adj_val_, adj_tan_;
};

inline double Var::value() const { return tape_->value_at(id_); }
inline double Var::tangent() const { return tape_->tangent_at(id_); }
inline double Var::adjoint() const { return tape_->adjoint_at(id_); }
inline double Var::tangent_adjoint() const { return tape_->tangent_adjoint_at(id_); }

inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape()->div(a, b); }
inline Var operator-(Var a) { return a.tape()->neg(a); }
inline Var operator+(Var a, double k) { return a.tape()->shift(a, k); }
inline Var operator+(double k, Var a) { return a.tape()->shift(a, k); }
inline Var operator-(Var a, double k) { return a.tape()->shift(a, -k); }
inline Var operator-(double k, Var a) { return a.tape()->shift(a.tape()->neg(a), k); }
inline Var operator*(Var a, double k) { return a.tape()->scale(a, k); }
inline Var operator*(double k, Var a) { return a.tape()->scale(a, k); }
inline Var operator/(Var a, double k) { return a.tape()->scale(a, 1.0 / k); }
inline Var operator/(double k, Var a) { return a.tape()->rcp_scale(k, a); }

} // namespace flotapinn::ad
