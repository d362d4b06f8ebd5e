#include "dimel/numkernel/tape.hpp"

#include "dimel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dimel::nk {

const Tensor2& Var::value() const { return tape->value(*this); }
const Tensor2& Var::grad() const { return tape->grad(*this); }

Var Tape::variable(Tensor2 value) {
    nodes_.push_back(Node{std::move(value), {}, true, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor2 value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}});
    return Var{this, nodes_.size() - 1};
}

const Tensor2& Tape::grad(Var v) const {
    const Node& node = nodes_.at(v.id);
    if (!has_backward_) throw ContractError("gradient requested before backward()");
    return node.grad;
}

Var Tape::record(Tensor2 value, std::span<const Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) {
        if (in.tape != this) throw ContractError("operands belong to different tapes");
        needs = needs || nodes_[in.id].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
    if (loss.tape != this || loss.id >= nodes_.size()) {
        throw ContractError("loss node does not belong to this tape");
    }
    const Tensor2& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ContractError("backward needs a scalar loss, got " + lv.shape_string());
    }
    for (Node& node : nodes_) node.grad = Tensor2(node.value.rows(), node.value.cols());
    has_backward_ = true;
    visits_ = 0;
    nodes_[loss.id].grad(0, 0) = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        ++visits_;
        if (node.requires_grad && node.backward) node.backward(*this, i);
    }
}

namespace {

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + " shape mismatch: " + a.shape_string() + " vs " +
                             b.shape_string());
    }
}

// g[in] += src (same shape)
void accumulate(Tape& t, std::size_t in, const Tensor2& src, double factor = 1.0) {
    if (!t.requires_grad_at(in)) return;
    auto& dst = t.grad_mut(in).data();
    const auto& s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * s[i];
}

} // namespace

Var matmul(Var a, Var b) {
    Tensor2 out = matmul(a.value(), b.value());
    const std::size_t ia = a.id, ib = b.id;
    Var inputs[] = {a, b};
    return a.tape->record(std::move(out), inputs, [ia, ib](Tape& t, std::size_t self) {
        const Tensor2& g = t.grad_at(self);
        if (t.requires_grad_at(ia)) accumulate(t, ia, matmul(g, transpose(t.value_at(ib))));
        if (t.requires_grad_at(ib)) accumulate(t, ib, matmul(transpose(t.value_at(ia)), g));
    });
}

Var transpose(Var a) {
    const std::size_t ia = a.id;
    Var inputs[] = {a};
    return a.tape->record(transpose(a.value()), inputs, [ia](Tape& t, std::size_t self) {
        accumulate(t, ia, transpose(t.grad_at(self)));
    });
}

Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor2 out = a.value();
    const auto& bd = b.value().data();
    for (std::size_t i = 0; i < bd.size(); ++i) out.data()[i] += bd[i];
    const std::size_t ia = a.id, ib = b.id;
    Var inputs[] = {a, b};
    return a.tape->record(std::move(out), inputs, [ia, ib](Tape& t, std::size_t self) {
        accumulate(t, ia, t.grad_at(self));
        accumulate(t, ib, t.grad_at(self));
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor2 out = a.value();
    const auto& bd = b.value().data();
    for (std::size_t i = 0; i < bd.size(); ++i) out.data()[i] -= bd[i];
    const std::size_t ia = a.id, ib = b.id;
    Var inputs[] = {a, b};
    return a.tape->record(std::move(out), inputs, [ia, ib](Tape& t, std::size_t self) {
        accumulate(t, ia, t.grad_at(self));
        accumulate(t, ib, t.grad_at(self), -1.0);
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor2 out = a.value();
    const auto& bd = b.value().data();
    for (std::size_t i = 0; i < bd.size(); ++i) out.data()[i] *= bd[i];
    const std::size_t ia = a.id, ib = b.id;
    Var inputs[] = {a, b};
    return a.tape->record(std::move(out), inputs, [ia, ib](Tape& t, std::size_t self) {
        const auto& g = t.grad_at(self).data();
        const auto& av = t.value_at(ia).data();
        const auto& bv = t.value_at(ib).data();
        if (t.requires_grad_at(ia)) {
            auto& ga = t.grad_mut(ia).data();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad_at(ib)) {
            auto& gb = t.grad_mut(ib).data();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var div(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "div");
    Tensor2 out = a.value();
    const auto& bd = b.value().data();
    for (std::size_t i = 0; i < bd.size(); ++i) out.data()[i] /= bd[i];
    const std::size_t ia = a.id, ib = b.id;
    Var inputs[] = {a, b};
    return a.tape->record(std::move(out), inputs, [ia, ib](Tape& t, std::size_t self) {
        const auto& g = t.grad_at(self).data();
        const auto& av = t.value_at(ia).data();
        const auto& bv = t.value_at(ib).data();
        if (t.requires_grad_at(ia)) {
            auto& ga = t.grad_mut(ia).data();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
        }
        if (t.requires_grad_at(ib)) {
            auto& gb = t.grad_mut(ib).data();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

Var scale(Var a, double s) {
    Tensor2 out = a.value();
    for (double& x : out.data()) x *= s;
    const std::size_t ia = a.id;
    Var inputs[] = {a};
    return a.tape->record(std::move(out), inputs, [ia, s](Tape& t, std::size_t self) {
        accumulate(t, ia, t.grad_at(self), s);
    });
}

Var sub_scalar(Var a, Var s) {
    if (s.rows() != 1 || s.cols() != 1) {
        throw DimensionError("sub_scalar expects a 1x1 operand, got " + s.value().shape_string());
    }
    Tensor2 out = a.value();
    const double sv = s.value()(0, 0);
    for (double& x : out.data()) x -= sv;
    const std::size_t ia = a.id, is = s.id;
    Var inputs[] = {a, s};
    return a.tape->record(std::move(out), inputs, [ia, is](Tape& t, std::size_t self) {
        accumulate(t, ia, t.grad_at(self));
        if (t.requires_grad_at(is)) {
            double total = 0.0;
            for (double g : t.grad_at(self).data()) total += g;
            t.grad_mut(is)(0, 0) -= total;
        }
    });
}

Var exp(Var a) {
    Tensor2 out = a.value();
    for (double& x : out.data()) x = std::exp(x);
    const std::size_t ia = a.id;
    Var inputs[] = {a};
    return a.tape->record(std::move(out), inputs, [ia](Tape& t, std::size_t self) {
        const auto& g = t.grad_at(self).data();
        const auto& y = t.value_at(self).data();
        auto& ga = t.grad_mut(ia).data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    });
}

Var log(Var a) {
    Tensor2 out = a.value();
    for (double& x : out.data()) {
        if (!(x > 0.0)) throw DomainError("log of non-positive value");
        x = std::log(x);
    }
    const std::size_t ia = a.id;
    Var inputs[] = {a};
    return a.tape->record(std::move(out), inputs, [ia](Tape& t, std::size_t self) {
        const auto& g = t.grad_at(self).data();
        const auto& x = t.value_at(ia).data();
        auto& ga = t.grad_mut(ia).data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
    });
}

Var sum(Var a) {
    double total = 0.0;
    for (double x : a.value().data()) total += x;
    const std::size_t ia = a.id;
    Var inputs[] = {a};
    return a.tape->record(Tensor2(1, 1, total), inputs, [ia](Tape& t, std::size_t self) {
        const double g = t.grad_at(self)(0, 0);
        for (double& x : t.grad_mut(ia).data()) x += g;
    });
}

Var logsumexp(Var a) {
    const auto& x = a.value().data();
    if (x.empty()) throw DomainError("logsumexp of empty input");
    const double peak = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(peak)) throw DomainError("logsumexp input is not finite");
    double total = 0.0;
    for (double v : x) total += std::exp(v - peak);
    const double result = peak + std::log(total);
    const std::size_t ia = a.id;
    Var inputs[] = {a};
    return a.tape->record(Tensor2(1, 1, result), inputs, [ia](Tape& t, std::size_t self) {
        const double g = t.grad_at(self)(0, 0);
        const double y = t.value_at(self)(0, 0);
        const auto& xv = t.value_at(ia).data();
        auto& ga = t.grad_mut(ia).data();
        for (std::size_t i = 0; i < xv.size(); ++i) ga[i] += g * std::exp(xv[i] - y);
    });
}

Var softmax_rows(Var a) {
    const Tensor2& x = a.value();
    Tensor2 out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto probs = softmax(x.row(r));
        std::copy(probs.begin(), probs.end(), out.row(r).begin());
    }
    const std::size_t ia = a.id;
    Var inputs[] = {a};
    return a.tape->record(std::move(out), inputs, [ia](Tape& t, std::size_t self) {
        const Tensor2& y = t.value_at(self);
        const Tensor2& g = t.grad_at(self);
        Tensor2& ga = t.grad_mut(ia);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            const double inner = dot(y.row(r), g.row(r));
            for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - inner);
        }
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Tensor2& x = a.value();
    if (begin > end || end > x.cols()) {
        throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of range for " + x.shape_string());
    }
    Tensor2 out(x.rows(), end - begin);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = x(r, c);
    const std::size_t ia = a.id;
    Var inputs[] = {a};
    return a.tape->record(std::move(out), inputs, [ia, begin](Tape& t, std::size_t self) {
        const Tensor2& g = t.grad_at(self);
        Tensor2& ga = t.grad_mut(ia);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c + begin) += g(r, c);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols of zero parts");
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        if (p.rows() != rows) {
            throw DimensionError("concat_cols row mismatch: " + std::to_string(p.rows()) + " vs " +
                                 std::to_string(rows));
        }
        cols += p.cols();
    }
    Tensor2 out(rows, cols);
    std::vector<std::size_t> ids;
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor2& x = p.value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) out(r, offset + c) = x(r, c);
        offset += x.cols();
        ids.push_back(p.id);
    }
    return parts[0].tape->record(std::move(out), parts, [ids](Tape& t, std::size_t self) {
        const Tensor2& g = t.grad_at(self);
        std::size_t off = 0;
        for (std::size_t id : ids) {
            const std::size_t width = t.value_at(id).cols();
            if (t.requires_grad_at(id)) {
                Tensor2& gi = t.grad_mut(id);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < width; ++c) gi(r, c) += g(r, off + c);
            }
            off += width;
        }
    });
}

Var cosine_rows(Var a, Var b) {
    const Tensor2& av = a.value();
    const Tensor2& bv = b.value();
    if (av.rows() != 1 || av.cols() != bv.cols()) {
        throw DimensionError("cosine_rows expects 1xd against Kxd, got " + av.shape_string() +
                             " and " + bv.shape_string());
    }
    const double na = norm(av.row(0));
    if (na == 0.0) throw DomainError("cosine of zero-norm vector");
    Tensor2 out(1, bv.rows());
    for (std::size_t k = 0; k < bv.rows(); ++k) {
        const double nb = norm(bv.row(k));
        if (nb == 0.0) throw DomainError("cosine of zero-norm vector (row " + std::to_string(k) + ")");
        out(0, k) = dot(av.row(0), bv.row(k)) / (na * nb);
    }
    const std::size_t ia = a.id, ib = b.id;
    Var inputs[] = {a, b};
    return a.tape->record(std::move(out), inputs, [ia, ib](Tape& t, std::size_t self) {
        const Tensor2& x = t.value_at(ia);
        const Tensor2& rows = t.value_at(ib);
        const Tensor2& s = t.value_at(self);
        const Tensor2& g = t.grad_at(self);
        const double nx = norm(x.row(0));
        const std::size_t d = x.cols();
        const bool grad_a = t.requires_grad_at(ia);
        const bool grad_b = t.requires_grad_at(ib);
        for (std::size_t k = 0; k < rows.rows(); ++k) {
            const double gk = g(0, k);
            if (gk == 0.0) continue;
            const double nr = norm(rows.row(k));
            const double sk = s(0, k);
            if (grad_a) {
                Tensor2& ga = t.grad_mut(ia);
                for (std::size_t j = 0; j < d; ++j)
                    ga(0, j) += gk * (rows(k, j) / (nx * nr) - sk * x(0, j) / (nx * nx));
            }
            if (grad_b) {
                Tensor2& gb = t.grad_mut(ib);
                for (std::size_t j = 0; j < d; ++j)
                    gb(k, j) += gk * (x(0, j) / (nx * nr) - sk * rows(k, j) / (nr * nr));
            }
        }
    });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

} // namespace dimel::nk
