#pragma once

// Dense row-major tensors and a reverse-mode tape.
//
// A Tape records every forward operation in order; backward() walks the
// records in exact reverse order and accumulates gradients additively.
// Trainable tensors live outside the tape as Parameters: the tape reads their
// values in place and accumulates into Parameter::grad.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace geoprog::nn {

struct Parameter {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;

    Parameter() = default;
    Parameter(std::string n, std::size_t r, std::size_t c)
        : name(std::move(n)), rows(r), cols(c), value(r * c, 0.0), grad(r * c, 0.0) {}

    std::size_t size() const { return value.size(); }
    double& at(std::size_t r, std::size_t c) { return value[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return value[r * cols + c]; }
    void zero_grad();
};

// Named parameters in a stable (lexicographic) order.
class ParameterSet {
   public:
    Parameter& add(const std::string& name, std::size_t rows, std::size_t cols);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    void zero_grad();
    std::size_t total_size() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    std::size_t size() const { return params_.size(); }

   private:
    std::map<std::string, Parameter> params_;
};

// Handle to a tape record. Only meaningful for the tape that created it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
   public:
    enum class Op : std::uint8_t {
        Constant,
        Param,
        MatMul,
        MatMulNT,
        Add,
        AddBias,
        Sub,
        Mul,
        Scale,
        Sigmoid,
        Tanh,
        Relu,
        ConcatCols,
        ConcatRows,
        SliceRows,
        SliceCols,
        SumRows,
        SumAll,
        Dot,
        SoftmaxRow,
        LogSoftmaxPick,
        GatherRows,
        ReplaceCols,
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves.
    Var constant(std::size_t rows, std::size_t cols, std::span<const double> data);
    Var constant(std::size_t rows, std::size_t cols, double fill = 0.0);
    Var param(Parameter& p);
    // Reads p in place but never accumulates a gradient into it.
    Var frozen_param(Parameter& p);

    // a (m×k) · b (k×n)
    Var matmul(Var a, Var b);
    // a (m×k) · bᵀ where b is (n×k); the usual "x·Wᵀ" linear map.
    Var matmul_nt(Var a, Var b);
    Var add(Var a, Var b);
    // a (m×n) + bias (1×n) broadcast over rows.
    Var add_bias(Var a, Var bias);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var concat_cols(Var a, Var b);
    Var concat_rows(std::span<const Var> parts);
    Var slice_rows(Var a, std::size_t start, std::size_t count);
    Var row(Var a, std::size_t r) { return slice_rows(a, r, 1); }
    Var slice_cols(Var a, std::size_t start, std::size_t count);
    // Column-wise sum over rows [start, end) → 1×cols. mean=true divides by the count.
    Var sum_rows(Var a, std::size_t start, std::size_t end, bool mean = false);
    Var sum_all(Var a);
    // Inner product of two same-shape tensors → 1×1.
    Var dot(Var a, Var b);
    // Row-vector softmax.
    Var softmax_row(Var a);
    // log of the normalized masked softmax of a row vector, evaluated at `index` → 1×1.
    // mask[j] != 0 marks an allowed entry.
    Var log_softmax_pick(Var logits, std::span<const std::uint8_t> mask, std::size_t index);
    // Rows of a selected by index (embedding lookup).
    Var gather_rows(Var a, std::span<const int> indices);
    // Copy of the row vector base with columns cols[k] taken from src (1×|cols|).
    Var replace_cols(Var base, Var src, std::span<const int> cols);

    std::size_t rows(Var v) const { return nodes_[check(v)].rows; }
    std::size_t cols(Var v) const { return nodes_[check(v)].cols; }
    std::span<const double> value(Var v) const;
    double scalar(Var v) const;
    std::vector<double> to_vector(Var v) const;

    // Accumulates d(root)/d(param) into every parameter reached from root.
    // root must be 1×1. Gradients of intermediates are discarded afterwards.
    void backward(Var root, double seed = 1.0);

    std::size_t size() const { return nodes_.size(); }
    void clear();

   private:
    struct Node {
        Op op = Op::Constant;
        int a = -1;
        int b = -1;
        std::uint32_t rows = 0;
        std::uint32_t cols = 0;
        std::size_t off = 0;
        Parameter* param = nullptr;
        std::size_t i0 = 0;
        std::size_t i1 = 0;
        std::size_t aux_off = 0;
        std::size_t aux_len = 0;
        double s = 0.0;
        bool needs_grad = false;
    };

    int check(Var v) const;
    int push(Node n);
    const double* vptr(const Node& n) const;
    double* gptr(const Node& n);
    void backward_node(const Node& n);

    std::vector<Node> nodes_;
    std::vector<double> vals_;
    std::vector<double> grads_;
    std::vector<int> aux_;
};

double sigmoid(double x);

}  // namespace geoprog::nn
