#include "geoprog/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoprog/error.hpp"

namespace geoprog::nn {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

[[noreturn]] void shape_error(const char* op, std::size_t ar, std::size_t ac, std::size_t br,
                              std::size_t bc) {
    throw Error(Errc::ShapeMismatch,
                std::string(op) + " " + shape_str(ar, ac) + " vs " + shape_str(br, bc));
}

}  // namespace

double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

int Tape::check(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw Error(Errc::ShapeMismatch, "invalid tape handle");
    }
    return v.id;
}

int Tape::push(Node n) {
    if (n.op != Op::Param) {
        n.off = vals_.size();
        vals_.resize(vals_.size() + static_cast<std::size_t>(n.rows) * n.cols, 0.0);
    }
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size() - 1);
}

const double* Tape::vptr(const Node& n) const {
    if (n.op == Op::Param) {
        return n.param->value.data();
    }
    return vals_.data() + n.off;
}

double* Tape::gptr(const Node& n) {
    if (n.op == Op::Param) {
        return n.param->grad.data();
    }
    return grads_.data() + n.off;
}

std::span<const double> Tape::value(Var v) const {
    const Node& n = nodes_[check(v)];
    return {vptr(n), static_cast<std::size_t>(n.rows) * n.cols};
}

double Tape::scalar(Var v) const {
    const Node& n = nodes_[check(v)];
    if (n.rows != 1 || n.cols != 1) {
        shape_error("scalar", n.rows, n.cols, 1, 1);
    }
    return vptr(n)[0];
}

std::vector<double> Tape::to_vector(Var v) const {
    auto s = value(v);
    return {s.begin(), s.end()};
}

void Tape::clear() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    aux_.clear();
}

Var Tape::constant(std::size_t rows, std::size_t cols, std::span<const double> data) {
    if (data.size() != rows * cols) {
        shape_error("constant", rows, cols, data.size(), 1);
    }
    Node n;
    n.op = Op::Constant;
    n.rows = static_cast<std::uint32_t>(rows);
    n.cols = static_cast<std::uint32_t>(cols);
    const int id = push(n);
    std::copy(data.begin(), data.end(), vals_.begin() + static_cast<std::ptrdiff_t>(nodes_[id].off));
    return {id};
}

Var Tape::constant(std::size_t rows, std::size_t cols, double fill) {
    Node n;
    n.op = Op::Constant;
    n.rows = static_cast<std::uint32_t>(rows);
    n.cols = static_cast<std::uint32_t>(cols);
    const int id = push(n);
    std::fill_n(vals_.begin() + static_cast<std::ptrdiff_t>(nodes_[id].off), rows * cols, fill);
    return {id};
}

Var Tape::param(Parameter& p) {
    if (p.value.size() != p.rows * p.cols || p.grad.size() != p.value.size()) {
        throw Error(Errc::ShapeMismatch, "parameter " + p.name + " storage disagrees with shape");
    }
    Node n;
    n.op = Op::Param;
    n.rows = static_cast<std::uint32_t>(p.rows);
    n.cols = static_cast<std::uint32_t>(p.cols);
    n.param = &p;
    n.needs_grad = true;
    return {push(n)};
}

Var Tape::frozen_param(Parameter& p) {
    Var v = param(p);
    nodes_[v.id].needs_grad = false;
    return v;
}

Var Tape::matmul(Var a, Var b) {
    const Node A = nodes_[check(a)];
    const Node B = nodes_[check(b)];
    if (A.cols != B.rows) {
        shape_error("matmul", A.rows, A.cols, B.rows, B.cols);
    }
    Node n;
    n.op = Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.rows = A.rows;
    n.cols = B.cols;
    n.needs_grad = A.needs_grad || B.needs_grad;
    const int id = push(n);
    const double* pa = vptr(A);
    const double* pb = vptr(B);
    double* out = vals_.data() + nodes_[id].off;
    const std::size_t m = A.rows, k = A.cols, c = B.cols;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            const double av = pa[i * k + t];
            if (av == 0.0) continue;
            const double* brow = pb + t * c;
            double* orow = out + i * c;
            for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
        }
    }
    return {id};
}

Var Tape::matmul_nt(Var a, Var b) {
    const Node A = nodes_[check(a)];
    const Node B = nodes_[check(b)];
    if (A.cols != B.cols) {
        shape_error("matmul_nt", A.rows, A.cols, B.rows, B.cols);
    }
    Node n;
    n.op = Op::MatMulNT;
    n.a = a.id;
    n.b = b.id;
    n.rows = A.rows;
    n.cols = B.rows;
    n.needs_grad = A.needs_grad || B.needs_grad;
    const int id = push(n);
    const double* pa = vptr(A);
    const double* pb = vptr(B);
    double* out = vals_.data() + nodes_[id].off;
    const std::size_t m = A.rows, k = A.cols, c = B.rows;
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        for (std::size_t j = 0; j < c; ++j) {
            const double* brow = pb + j * k;
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
            out[i * c + j] = acc;
        }
    }
    return {id};
}

namespace {

template <typename F>
void binary_same(const double* pa, const double* pb, double* out, std::size_t len, F f) {
    for (std::size_t i = 0; i < len; ++i) out[i] = f(pa[i], pb[i]);
}

}  // namespace

#define GEOPROG_ELEMENTWISE_BINARY(NAME, OPCODE, EXPR)                           \
    Var Tape::NAME(Var a, Var b) {                                               \
        const Node A = nodes_[check(a)];                                         \
        const Node B = nodes_[check(b)];                                         \
        if (A.rows != B.rows || A.cols != B.cols) {                              \
            shape_error(#NAME, A.rows, A.cols, B.rows, B.cols);                  \
        }                                                                        \
        Node n;                                                                  \
        n.op = Op::OPCODE;                                                       \
        n.a = a.id;                                                              \
        n.b = b.id;                                                              \
        n.rows = A.rows;                                                         \
        n.cols = A.cols;                                                         \
        n.needs_grad = A.needs_grad || B.needs_grad;                             \
        const int id = push(n);                                                  \
        binary_same(vptr(A), vptr(B), vals_.data() + nodes_[id].off,             \
                    static_cast<std::size_t>(A.rows) * A.cols,                   \
                    [](double x, double y) { return EXPR; });                    \
        return {id};                                                             \
    }

GEOPROG_ELEMENTWISE_BINARY(add, Add, x + y)
GEOPROG_ELEMENTWISE_BINARY(sub, Sub, x - y)
GEOPROG_ELEMENTWISE_BINARY(mul, Mul, x* y)

#undef GEOPROG_ELEMENTWISE_BINARY

Var Tape::add_bias(Var a, Var bias) {
    const Node A = nodes_[check(a)];
    const Node B = nodes_[check(bias)];
    if (B.rows != 1 || B.cols != A.cols) {
        shape_error("add_bias", A.rows, A.cols, B.rows, B.cols);
    }
    Node n;
    n.op = Op::AddBias;
    n.a = a.id;
    n.b = bias.id;
    n.rows = A.rows;
    n.cols = A.cols;
    n.needs_grad = A.needs_grad || B.needs_grad;
    const int id = push(n);
    const double* pa = vptr(A);
    const double* pb = vptr(B);
    double* out = vals_.data() + nodes_[id].off;
    for (std::size_t i = 0; i < A.rows; ++i) {
        for (std::size_t j = 0; j < A.cols; ++j) out[i * A.cols + j] = pa[i * A.cols + j] + pb[j];
    }
    return {id};
}

namespace {

template <typename F>
void unary(const double* pa, double* out, std::size_t len, F f) {
    for (std::size_t i = 0; i < len; ++i) out[i] = f(pa[i]);
}

}  // namespace

Var Tape::scale(Var a, double s) {
    const Node A = nodes_[check(a)];
    Node n;
    n.op = Op::Scale;
    n.a = a.id;
    n.rows = A.rows;
    n.cols = A.cols;
    n.s = s;
    n.needs_grad = A.needs_grad;
    const int id = push(n);
    unary(vptr(A), vals_.data() + nodes_[id].off, static_cast<std::size_t>(A.rows) * A.cols,
          [s](double x) { return s * x; });
    return {id};
}

#define GEOPROG_ELEMENTWISE_UNARY(NAME, OPCODE, EXPR)                                      \
    Var Tape::NAME(Var a) {                                                                \
        const Node A = nodes_[check(a)];                                                   \
        Node n;                                                                            \
        n.op = Op::OPCODE;                                                                 \
        n.a = a.id;                                                                        \
        n.rows = A.rows;                                                                   \
        n.cols = A.cols;                                                                   \
        n.needs_grad = A.needs_grad;                                                       \
        const int id = push(n);                                                            \
        unary(vptr(A), vals_.data() + nodes_[id].off,                                      \
              static_cast<std::size_t>(A.rows) * A.cols, [](double x) { return EXPR; });   \
        return {id};                                                                       \
    }

GEOPROG_ELEMENTWISE_UNARY(sigmoid, Sigmoid, ::geoprog::nn::sigmoid(x))
GEOPROG_ELEMENTWISE_UNARY(tanh, Tanh, std::tanh(x))
GEOPROG_ELEMENTWISE_UNARY(relu, Relu, x > 0.0 ? x : 0.0)

#undef GEOPROG_ELEMENTWISE_UNARY

Var Tape::concat_cols(Var a, Var b) {
    const Node A = nodes_[check(a)];
    const Node B = nodes_[check(b)];
    if (A.rows != B.rows) {
        shape_error("concat_cols", A.rows, A.cols, B.rows, B.cols);
    }
    Node n;
    n.op = Op::ConcatCols;
    n.a = a.id;
    n.b = b.id;
    n.rows = A.rows;
    n.cols = A.cols + B.cols;
    n.needs_grad = A.needs_grad || B.needs_grad;
    const int id = push(n);
    const double* pa = vptr(A);
    const double* pb = vptr(B);
    double* out = vals_.data() + nodes_[id].off;
    for (std::size_t i = 0; i < A.rows; ++i) {
        std::copy_n(pa + i * A.cols, A.cols, out + i * n.cols);
        std::copy_n(pb + i * B.cols, B.cols, out + i * n.cols + A.cols);
    }
    return {id};
}

Var Tape::concat_rows(std::span<const Var> parts) {
    if (parts.empty()) {
        throw Error(Errc::ShapeMismatch, "concat_rows of nothing");
    }
    Node n;
    n.op = Op::ConcatRows;
    n.cols = nodes_[check(parts[0])].cols;
    n.aux_off = aux_.size();
    n.aux_len = parts.size();
    for (Var p : parts) {
        const Node& P = nodes_[check(p)];
        if (P.cols != n.cols) {
            shape_error("concat_rows", P.rows, P.cols, P.rows, n.cols);
        }
        n.rows += P.rows;
        n.needs_grad = n.needs_grad || P.needs_grad;
        aux_.push_back(p.id);
    }
    const int id = push(n);
    double* out = vals_.data() + nodes_[id].off;
    for (Var p : parts) {
        const Node& P = nodes_[p.id];
        const std::size_t len = static_cast<std::size_t>(P.rows) * P.cols;
        std::copy_n(vptr(P), len, out);
        out += len;
    }
    return {id};
}

Var Tape::slice_rows(Var a, std::size_t start, std::size_t count) {
    const Node A = nodes_[check(a)];
    if (start + count > A.rows || count == 0) {
        shape_error("slice_rows", A.rows, A.cols, start + count, A.cols);
    }
    Node n;
    n.op = Op::SliceRows;
    n.a = a.id;
    n.rows = static_cast<std::uint32_t>(count);
    n.cols = A.cols;
    n.i0 = start;
    n.needs_grad = A.needs_grad;
    const int id = push(n);
    std::copy_n(vptr(A) + start * A.cols, count * A.cols, vals_.data() + nodes_[id].off);
    return {id};
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
    const Node A = nodes_[check(a)];
    if (start + count > A.cols || count == 0) {
        shape_error("slice_cols", A.rows, A.cols, A.rows, start + count);
    }
    Node n;
    n.op = Op::SliceCols;
    n.a = a.id;
    n.rows = A.rows;
    n.cols = static_cast<std::uint32_t>(count);
    n.i0 = start;
    n.needs_grad = A.needs_grad;
    const int id = push(n);
    const double* pa = vptr(A);
    double* out = vals_.data() + nodes_[id].off;
    for (std::size_t i = 0; i < A.rows; ++i) {
        std::copy_n(pa + i * A.cols + start, count, out + i * count);
    }
    return {id};
}

Var Tape::sum_rows(Var a, std::size_t start, std::size_t end, bool mean) {
    const Node A = nodes_[check(a)];
    if (start >= end || end > A.rows) {
        shape_error("sum_rows", A.rows, A.cols, end, A.cols);
    }
    Node n;
    n.op = Op::SumRows;
    n.a = a.id;
    n.rows = 1;
    n.cols = A.cols;
    n.i0 = start;
    n.i1 = end;
    n.s = mean ? 1.0 / static_cast<double>(end - start) : 1.0;
    n.needs_grad = A.needs_grad;
    const int id = push(n);
    const double* pa = vptr(A);
    double* out = vals_.data() + nodes_[id].off;
    for (std::size_t i = start; i < end; ++i) {
        for (std::size_t j = 0; j < A.cols; ++j) out[j] += pa[i * A.cols + j];
    }
    if (mean) {
        for (std::size_t j = 0; j < A.cols; ++j) out[j] *= n.s;
    }
    return {id};
}

Var Tape::sum_all(Var a) {
    const Node A = nodes_[check(a)];
    Node n;
    n.op = Op::SumAll;
    n.a = a.id;
    n.rows = 1;
    n.cols = 1;
    n.needs_grad = A.needs_grad;
    const int id = push(n);
    const double* pa = vptr(A);
    double acc = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(A.rows) * A.cols; ++i) acc += pa[i];
    vals_[nodes_[id].off] = acc;
    return {id};
}

Var Tape::dot(Var a, Var b) {
    const Node A = nodes_[check(a)];
    const Node B = nodes_[check(b)];
    if (A.rows != B.rows || A.cols != B.cols) {
        shape_error("dot", A.rows, A.cols, B.rows, B.cols);
    }
    Node n;
    n.op = Op::Dot;
    n.a = a.id;
    n.b = b.id;
    n.rows = 1;
    n.cols = 1;
    n.needs_grad = A.needs_grad || B.needs_grad;
    const int id = push(n);
    const double* pa = vptr(A);
    const double* pb = vptr(B);
    double acc = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(A.rows) * A.cols; ++i) acc += pa[i] * pb[i];
    vals_[nodes_[id].off] = acc;
    return {id};
}

Var Tape::softmax_row(Var a) {
    const Node A = nodes_[check(a)];
    if (A.rows != 1) {
        shape_error("softmax_row", A.rows, A.cols, 1, A.cols);
    }
    Node n;
    n.op = Op::SoftmaxRow;
    n.a = a.id;
    n.rows = 1;
    n.cols = A.cols;
    n.needs_grad = A.needs_grad;
    const int id = push(n);
    const double* pa = vptr(A);
    double* out = vals_.data() + nodes_[id].off;
    const double mx = *std::max_element(pa, pa + A.cols);
    double z = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) {
        out[j] = std::exp(pa[j] - mx);
        z += out[j];
    }
    for (std::size_t j = 0; j < A.cols; ++j) out[j] /= z;
    return {id};
}

Var Tape::log_softmax_pick(Var logits, std::span<const std::uint8_t> mask, std::size_t index) {
    const Node A = nodes_[check(logits)];
    if (A.rows != 1 || mask.size() != A.cols || index >= A.cols) {
        shape_error("log_softmax_pick", A.rows, A.cols, 1, mask.size());
    }
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
        throw Error(Errc::AllMasked, "no allowed entry in log_softmax_pick");
    }
    if (mask[index] == 0) {
        throw Error(Errc::GoldSymbolMasked, "target index " + std::to_string(index) + " is masked");
    }
    Node n;
    n.op = Op::LogSoftmaxPick;
    n.a = logits.id;
    n.rows = 1;
    n.cols = 1;
    n.i0 = index;
    n.aux_off = aux_.size();
    n.aux_len = mask.size();
    n.needs_grad = A.needs_grad;
    for (auto m : mask) aux_.push_back(m != 0 ? 1 : 0);
    const int id = push(n);
    const double* pa = vptr(A);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < A.cols; ++j) {
        if (mask[j]) mx = std::max(mx, pa[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) {
        if (mask[j]) z += std::exp(pa[j] - mx);
    }
    vals_[nodes_[id].off] = pa[index] - mx - std::log(z);
    return {id};
}

Var Tape::gather_rows(Var a, std::span<const int> indices) {
    const Node A = nodes_[check(a)];
    if (indices.empty()) {
        throw Error(Errc::ShapeMismatch, "gather_rows of nothing");
    }
    for (int r : indices) {
        if (r < 0 || static_cast<std::size_t>(r) >= A.rows) {
            shape_error("gather_rows", A.rows, A.cols, static_cast<std::size_t>(r), A.cols);
        }
    }
    Node n;
    n.op = Op::GatherRows;
    n.a = a.id;
    n.rows = static_cast<std::uint32_t>(indices.size());
    n.cols = A.cols;
    n.aux_off = aux_.size();
    n.aux_len = indices.size();
    n.needs_grad = A.needs_grad;
    aux_.insert(aux_.end(), indices.begin(), indices.end());
    const int id = push(n);
    const double* pa = vptr(A);
    double* out = vals_.data() + nodes_[id].off;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        std::copy_n(pa + static_cast<std::size_t>(indices[k]) * A.cols, A.cols, out + k * A.cols);
    }
    return {id};
}

Var Tape::replace_cols(Var base, Var src, std::span<const int> cols) {
    const Node A = nodes_[check(base)];
    const Node S = nodes_[check(src)];
    if (A.rows != 1 || S.rows != 1 || S.cols != cols.size()) {
        shape_error("replace_cols", A.rows, A.cols, S.rows, S.cols);
    }
    for (int c : cols) {
        if (c < 0 || static_cast<std::size_t>(c) >= A.cols) {
            shape_error("replace_cols", A.rows, A.cols, 1, static_cast<std::size_t>(c));
        }
    }
    Node n;
    n.op = Op::ReplaceCols;
    n.a = base.id;
    n.b = src.id;
    n.rows = 1;
    n.cols = A.cols;
    n.aux_off = aux_.size();
    n.aux_len = cols.size();
    n.needs_grad = A.needs_grad || S.needs_grad;
    aux_.insert(aux_.end(), cols.begin(), cols.end());
    const int id = push(n);
    double* out = vals_.data() + nodes_[id].off;
    std::copy_n(vptr(A), A.cols, out);
    const double* ps = vptr(S);
    for (std::size_t k = 0; k < cols.size(); ++k) out[cols[k]] = ps[k];
    return {id};
}

void Tape::backward(Var root, double seed) {
    const int r = check(root);
    if (nodes_[r].rows != 1 || nodes_[r].cols != 1) {
        shape_error("backward", nodes_[r].rows, nodes_[r].cols, 1, 1);
    }
    grads_.assign(vals_.size(), 0.0);
    if (!nodes_[r].needs_grad) {
        return;
    }
    if (nodes_[r].op == Op::Param) {
        nodes_[r].param->grad[0] += seed;
        return;
    }
    grads_[nodes_[r].off] = seed;
    for (int id = r; id >= 0; --id) {
        const Node& n = nodes_[id];
        if (!n.needs_grad || n.op == Op::Param || n.op == Op::Constant) {
            continue;
        }
        backward_node(n);
    }
}

void Tape::backward_node(const Node& n) {
    const double* g = grads_.data() + n.off;
    const std::size_t len = static_cast<std::size_t>(n.rows) * n.cols;
    const Node* A = n.a >= 0 ? &nodes_[n.a] : nullptr;
    const Node* B = n.b >= 0 ? &nodes_[n.b] : nullptr;
    const bool ga = A != nullptr && A->needs_grad;
    const bool gb = B != nullptr && B->needs_grad;

    switch (n.op) {
        case Op::Constant:
        case Op::Param:
            break;
        case Op::MatMul: {
            // C = A·B; dA += dC·Bᵀ, dB += Aᵀ·dC
            const std::size_t m = A->rows, k = A->cols, c = B->cols;
            const double* pa = vptr(*A);
            const double* pb = vptr(*B);
            if (ga) {
                double* da = gptr(*A);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t t = 0; t < k; ++t) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * pb[t * c + j];
                        da[i * k + t] += acc;
                    }
                }
            }
            if (gb) {
                double* db = gptr(*B);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t t = 0; t < k; ++t) {
                        const double av = pa[i * k + t];
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < c; ++j) db[t * c + j] += av * g[i * c + j];
                    }
                }
            }
            break;
        }
        case Op::MatMulNT: {
            // C = A·Bᵀ; dA += dC·B, dB += dCᵀ·A
            const std::size_t m = A->rows, k = A->cols, c = B->rows;
            const double* pa = vptr(*A);
            const double* pb = vptr(*B);
            if (ga) {
                double* da = gptr(*A);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        const double gv = g[i * c + j];
                        if (gv == 0.0) continue;
                        const double* brow = pb + j * k;
                        for (std::size_t t = 0; t < k; ++t) da[i * k + t] += gv * brow[t];
                    }
                }
            }
            if (gb) {
                double* db = gptr(*B);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* arow = pa + i * k;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double gv = g[i * c + j];
                        if (gv == 0.0) continue;
                        double* brow = db + j * k;
                        for (std::size_t t = 0; t < k; ++t) brow[t] += gv * arow[t];
                    }
                }
            }
            break;
        }
        case Op::Add: {
            if (ga) {
                double* da = gptr(*A);
                for (std::size_t i = 0; i < len; ++i) da[i] += g[i];
            }
            if (gb) {
                double* db = gptr(*B);
                for (std::size_t i = 0; i < len; ++i) db[i] += g[i];
            }
            break;
        }
        case Op::AddBias: {
            if (ga) {
                double* da = gptr(*A);
                for (std::size_t i = 0; i < len; ++i) da[i] += g[i];
            }
            if (gb) {
                double* db = gptr(*B);
                for (std::size_t i = 0; i < n.rows; ++i) {
                    for (std::size_t j = 0; j < n.cols; ++j) db[j] += g[i * n.cols + j];
                }
            }
            break;
        }
        case Op::Sub: {
            if (ga) {
                double* da = gptr(*A);
                for (std::size_t i = 0; i < len; ++i) da[i] += g[i];
            }
            if (gb) {
                double* db = gptr(*B);
                for (std::size_t i = 0; i < len; ++i) db[i] -= g[i];
            }
            break;
        }
        case Op::Mul: {
            const double* pa = vptr(*A);
            const double* pb = vptr(*B);
            if (ga) {
                double* da = gptr(*A);
                for (std::size_t i = 0; i < len; ++i) da[i] += g[i] * pb[i];
            }
            if (gb) {
                double* db = gptr(*B);
                for (std::size_t i = 0; i < len; ++i) db[i] += g[i] * pa[i];
            }
            break;
        }
        case Op::Scale: {
            double* da = gptr(*A);
            for (std::size_t i = 0; i < len; ++i) da[i] += n.s * g[i];
            break;
        }
        case Op::Sigmoid: {
            const double* y = vals_.data() + n.off;
            double* da = gptr(*A);
            for (std::size_t i = 0; i < len; ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
            break;
        }
        case Op::Tanh: {
            const double* y = vals_.data() + n.off;
            double* da = gptr(*A);
            for (std::size_t i = 0; i < len; ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
            break;
        }
        case Op::Relu: {
            const double* pa = vptr(*A);
            double* da = gptr(*A);
            for (std::size_t i = 0; i < len; ++i) {
                if (pa[i] > 0.0) da[i] += g[i];
            }
            break;
        }
        case Op::ConcatCols: {
            for (std::size_t i = 0; i < n.rows; ++i) {
                if (ga) {
                    double* da = gptr(*A) + i * A->cols;
                    for (std::size_t j = 0; j < A->cols; ++j) da[j] += g[i * n.cols + j];
                }
                if (gb) {
                    double* db = gptr(*B) + i * B->cols;
                    for (std::size_t j = 0; j < B->cols; ++j) db[j] += g[i * n.cols + A->cols + j];
                }
            }
            break;
        }
        case Op::ConcatRows: {
            const double* gp = g;
            for (std::size_t k = 0; k < n.aux_len; ++k) {
                const Node& P = nodes_[aux_[n.aux_off + k]];
                const std::size_t plen = static_cast<std::size_t>(P.rows) * P.cols;
                if (P.needs_grad) {
                    double* dp = gptr(P);
                    for (std::size_t i = 0; i < plen; ++i) dp[i] += gp[i];
                }
                gp += plen;
            }
            break;
        }
        case Op::SliceRows: {
            double* da = gptr(*A) + n.i0 * A->cols;
            for (std::size_t i = 0; i < len; ++i) da[i] += g[i];
            break;
        }
        case Op::SliceCols: {
            double* da = gptr(*A);
            for (std::size_t i = 0; i < n.rows; ++i) {
                for (std::size_t j = 0; j < n.cols; ++j) da[i * A->cols + n.i0 + j] += g[i * n.cols + j];
            }
            break;
        }
        case Op::SumRows: {
            double* da = gptr(*A);
            for (std::size_t i = n.i0; i < n.i1; ++i) {
                for (std::size_t j = 0; j < n.cols; ++j) da[i * n.cols + j] += n.s * g[j];
            }
            break;
        }
        case Op::SumAll: {
            double* da = gptr(*A);
            const std::size_t alen = static_cast<std::size_t>(A->rows) * A->cols;
            for (std::size_t i = 0; i < alen; ++i) da[i] += g[0];
            break;
        }
        case Op::Dot: {
            const std::size_t alen = static_cast<std::size_t>(A->rows) * A->cols;
            const double* pa = vptr(*A);
            const double* pb = vptr(*B);
            if (ga) {
                double* da = gptr(*A);
                for (std::size_t i = 0; i < alen; ++i) da[i] += g[0] * pb[i];
            }
            if (gb) {
                double* db = gptr(*B);
                for (std::size_t i = 0; i < alen; ++i) db[i] += g[0] * pa[i];
            }
            break;
        }
        case Op::SoftmaxRow: {
            const double* y = vals_.data() + n.off;
            double gy = 0.0;
            for (std::size_t j = 0; j < n.cols; ++j) gy += g[j] * y[j];
            double* da = gptr(*A);
            for (std::size_t j = 0; j < n.cols; ++j) da[j] += y[j] * (g[j] - gy);
            break;
        }
        case Op::LogSoftmaxPick: {
            const double* pa = vptr(*A);
            const int* mask = aux_.data() + n.aux_off;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < A->cols; ++j) {
                if (mask[j]) mx = std::max(mx, pa[j]);
            }
            double z = 0.0;
            for (std::size_t j = 0; j < A->cols; ++j) {
                if (mask[j]) z += std::exp(pa[j] - mx);
            }
            double* da = gptr(*A);
            for (std::size_t j = 0; j < A->cols; ++j) {
                if (!mask[j]) continue;
                const double p = std::exp(pa[j] - mx) / z;
                da[j] += g[0] * ((j == n.i0 ? 1.0 : 0.0) - p);
            }
            break;
        }
        case Op::GatherRows: {
            double* da = gptr(*A);
            for (std::size_t k = 0; k < n.aux_len; ++k) {
                const std::size_t r = static_cast<std::size_t>(aux_[n.aux_off + k]);
                for (std::size_t j = 0; j < n.cols; ++j) da[r * n.cols + j] += g[k * n.cols + j];
            }
            break;
        }
        case Op::ReplaceCols: {
            const int* cols = aux_.data() + n.aux_off;
            if (ga) {
                double* da = gptr(*A);
                for (std::size_t j = 0; j < n.cols; ++j) {
                    if (std::find(cols, cols + n.aux_len, static_cast<int>(j)) == cols + n.aux_len) {
                        da[j] += g[j];
                    }
                }
            }
            if (gb) {
                double* db = gptr(*B);
                for (std::size_t k = 0; k < n.aux_len; ++k) db[k] += g[cols[k]];
            }
            break;
        }
    }
}

}  // namespace geoprog::nn

namespace geoprog::nn {

Parameter& ParameterSet::add(const std::string& name, std::size_t rows, std::size_t cols) {
    auto [it, inserted] = params_.try_emplace(name, name, rows, cols);
    if (!inserted) {
        throw Error(Errc::InvalidConfig, "parameter declared twice: " + name);
    }
    return it->second;
}

Parameter& ParameterSet::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw Error(Errc::InvalidConfig, "no parameter named " + name);
    }
    return it->second;
}

const Parameter& ParameterSet::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw Error(Errc::InvalidConfig, "no parameter named " + name);
    }
    return it->second;
}

void ParameterSet::zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
}

std::size_t ParameterSet::total_size() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.size();
    return n;
}

}  // namespace geoprog::nn
