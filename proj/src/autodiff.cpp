#include "flotapinn/autodiff.hpp"

#include <cmath>
#include <string>

#include "flotapinn/errors.hpp"

namespace flotapinn::ad {

void Tape::reserve(std::size_t nodes) {
    op_.reserve(nodes);
    a_.reserve(nodes);
    b_.reserve(nodes);
    c_.reserve(nodes);
    k_.reserve(nodes);
    val_.reserve(nodes);
    tan_.reserve(nodes);
}

std::size_t Tape::check_id(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= op_.size())
        throw UsageError("tape: node id " + std::to_string(id) + " is not on this tape");
    return static_cast<std::size_t>(id);
}

std::int32_t Tape::operand(Var v) const {
    if (v.tape() != this)
        throw UsageError("tape: operand node belongs to a different tape");
    check_id(v.id());
    return v.id();
}

Var Tape::push(Op op, std::int32_t a, std::int32_t b, std::int32_t c, double k,
               double value, double tangent) {
    op_.push_back(op);
    a_.push_back(a);
    b_.push_back(b);
    c_.push_back(c);
    k_.push_back(k);
    val_.push_back(value);
    tan_.push_back(tangent);
    return Var(this, static_cast<std::int32_t>(op_.size() - 1));
}

Var Tape::lift(double value, double tangent) {
    return push(Op::kLeaf, -1, -1, -1, 0.0, value, tangent);
}

Var Tape::add(Var a, Var b) {
    const auto ia = operand(a), ib = operand(b);
    return push(Op::kAdd, ia, ib, -1, 0.0, val_[ia] + val_[ib], tan_[ia] + tan_[ib]);
}

Var Tape::sub(Var a, Var b) {
    const auto ia = operand(a), ib = operand(b);
    return push(Op::kSub, ia, ib, -1, 0.0, val_[ia] - val_[ib], tan_[ia] - tan_[ib]);
}

Var Tape::mul(Var a, Var b) {
    const auto ia = operand(a), ib = operand(b);
    return push(Op::kMul, ia, ib, -1, 0.0, val_[ia] * val_[ib],
                tan_[ia] * val_[ib] + val_[ia] * tan_[ib]);
}

Var Tape::mul_add(Var a, Var b, Var addend) {
    const auto ia = operand(a), ib = operand(b), ic = operand(addend);
    return push(Op::kMulAdd, ia, ib, ic, 0.0, val_[ia] * val_[ib] + val_[ic],
                tan_[ia] * val_[ib] + val_[ia] * tan_[ib] + tan_[ic]);
}

Var Tape::div(Var a, Var b) {
    const auto ia = operand(a), ib = operand(b);
    if (val_[ib] == 0.0)
        throw TapeError("tape: division by zero-valued node " + std::to_string(ib));
    const double inv = 1.0 / val_[ib];
    const double v = val_[ia] * inv;
    return push(Op::kDiv, ia, ib, -1, 0.0, v, (tan_[ia] - v * tan_[ib]) * inv);
}

Var Tape::rcp_scale(double k, Var a) {
    const auto ia = operand(a);
    if (val_[ia] == 0.0)
        throw TapeError("tape: division by zero-valued node " + std::to_string(ia));
    const double inv = 1.0 / val_[ia];
    const double v = k * inv;
    return push(Op::kRcpScale, ia, -1, -1, k, v, -v * inv * tan_[ia]);
}

Var Tape::neg(Var a) {
    const auto ia = operand(a);
    return push(Op::kNeg, ia, -1, -1, 0.0, -val_[ia], -tan_[ia]);
}

Var Tape::scale(Var a, double k) {
    const auto ia = operand(a);
    return push(Op::kScale, ia, -1, -1, k, k * val_[ia], k * tan_[ia]);
}

Var Tape::shift(Var a, double k) {
    const auto ia = operand(a);
    return push(Op::kShift, ia, -1, -1, k, val_[ia] + k, tan_[ia]);
}

Var Tape::tanh(Var a) {
    const auto ia = operand(a);
    const double v = std::tanh(val_[ia]);
    return push(Op::kTanh, ia, -1, -1, 0.0, v, (1.0 - v * v) * tan_[ia]);
}

Var Tape::softplus(Var a) {
    const auto ia = operand(a);
    const double x = val_[ia];
    const double v = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    const double sig = 1.0 / (1.0 + std::exp(-x));
    return push(Op::kSoftplus, ia, -1, -1, sig, v, sig * tan_[ia]);
}

Var Tape::sigmoid(Var a) {
    return shift(scale(tanh(scale(a, 0.5)), 0.5), 0.5);
}

Var Tape::tangent_of(Var a) {
    const auto ia = operand(a);
    return push(Op::kTangent, ia, -1, -1, 0.0, tan_[ia], 0.0);
}

void Tape::backward(Var loss) {
    if (loss.tape() != this)
        throw UsageError("tape: backward() loss node belongs to a different tape");
    const std::size_t root = check_id(loss.id());

    adj_val_.assign(op_.size(), 0.0);
    adj_tan_.assign(op_.size(), 0.0);
    adj_val_[root] = 1.0;

    for (std::int32_t i = static_cast<std::int32_t>(root); i >= 0; --i) {
        const double av = adj_val_[i];
        const double at = adj_tan_[i];
        if (av == 0.0 && at == 0.0) continue;

        const std::int32_t a = a_[i];
        const std::int32_t b = b_[i];
        switch (op_[i]) {
        case Op::kLeaf:
            break;
        case Op::kAdd:
            adj_val_[a] += av;
            adj_tan_[a] += at;
            adj_val_[b] += av;
            adj_tan_[b] += at;
            break;
        case Op::kSub:
            adj_val_[a] += av;
            adj_tan_[a] += at;
            adj_val_[b] -= av;
            adj_tan_[b] -= at;
            break;
        case Op::kMul:
            adj_val_[a] += av * val_[b] + at * tan_[b];
            adj_val_[b] += av * val_[a] + at * tan_[a];
            adj_tan_[a] += at * val_[b];
            adj_tan_[b] += at * val_[a];
            break;
        case Op::kMulAdd: {
            const std::int32_t c = c_[i];
            adj_val_[a] += av * val_[b] + at * tan_[b];
            adj_val_[b] += av * val_[a] + at * tan_[a];
            adj_tan_[a] += at * val_[b];
            adj_tan_[b] += at * val_[a];
            adj_val_[c] += av;
            adj_tan_[c] += at;
            break;
        }
        case Op::kDiv: {
            const double inv = 1.0 / val_[b];
            const double v = val_[i];
            adj_val_[a] += av * inv - at * tan_[b] * inv * inv;
            adj_tan_[a] += at * inv;
            adj_val_[b] += -av * v * inv + at * inv * inv * (2.0 * v * tan_[b] - tan_[a]);
            adj_tan_[b] += -at * v * inv;
            break;
        }
        case Op::kRcpScale: {
            const double inv = 1.0 / val_[a];
            const double v = val_[i];
            adj_val_[a] += -av * v * inv + at * 2.0 * v * tan_[a] * inv * inv;
            adj_tan_[a] += -at * v * inv;
            break;
        }
        case Op::kNeg:
            adj_val_[a] -= av;
            adj_tan_[a] -= at;
            break;
        case Op::kScale:
            adj_val_[a] += k_[i] * av;
            adj_tan_[a] += k_[i] * at;
            break;
        case Op::kShift:
            adj_val_[a] += av;
            adj_tan_[a] += at;
            break;
        case Op::kTanh: {
            const double s = 1.0 - val_[i] * val_[i];
            adj_val_[a] += av * s - at * 2.0 * val_[i] * s * tan_[a];
            adj_tan_[a] += at * s;
            break;
        }
        case Op::kSoftplus: {
            const double sig = k_[i];
            adj_val_[a] += av * sig + at * sig * (1.0 - sig) * tan_[a];
            adj_tan_[a] += at * sig;
            break;
        }
        case Op::kTangent:
            adj_tan_[a] += av;
            break;
        }
    }
}

std::vector<double> Tape::gradient(std::span<const Var> nodes) const {
    std::vector<double> out;
    out.reserve(nodes.size());
    for (const Var& v : nodes) {
        if (v.tape() != this)
            throw UsageError("tape: gradient() node belongs to a different tape");
        out.push_back(adj_val_[check_id(v.id())]);
    }
    return out;
}

void Tape::truncate(Checkpoint mark) {
    if (mark > op_.size())
        throw UsageError("tape: checkpoint is ahead of the current node count");
    op_.resize(mark);
    a_.resize(mark);
    b_.resize(mark);
    c_.resize(mark);
    k_.resize(mark);
    val_.resize(mark);
    tan_.resize(mark);
    if (adj_val_.size() > mark) adj_val_.resize(mark);
    if (adj_tan_.size() > mark) adj_tan_.resize(mark);
}

} // namespace flotapinn::ad
