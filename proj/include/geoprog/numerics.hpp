#pragma once

// Value-level probability helpers, the gated recurrent cell built on the tape,
// and a central-difference gradient checker.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "geoprog/tensor.hpp"

namespace geoprog::nn {

enum class SoftmaxMode {
    // softmax over all logits, then zero the masked entries (mass may be < 1).
    Literal,
    // renormalized over the allowed entries.
    Normalized,
};

// Throws Errc::AllMasked when no entry is allowed. Masked entries are exactly 0.
std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask,
                                   SoftmaxMode mode = SoftmaxMode::Normalized);

// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

// Gated recurrent cell with update gate z, reset gate r and tanh candidate:
//   z = σ(Wx_z·x + Uz·h + b_z), r = σ(Wx_r·x + Ur·h + b_r)
//   h̃ = tanh(Wx_h·x + Uh·(r⊙h) + b_h)
//   h' = (1−z)⊙h + z⊙h̃
// Parameters are stored as <prefix>.wx (3d×in, rows [z; r; h̃]), <prefix>.wh_gates
// (2d×d, rows [z; r]), <prefix>.wh_cand (d×d) and <prefix>.b (1×3d).
struct GruCell {
    std::string prefix;
    std::size_t input = 0;
    std::size_t hidden = 0;

    void declare(ParameterSet& params) const;
};

// Tape handles for one cell's parameters.
struct GruVars {
    Var wx;
    Var wh_gates;
    Var wh_cand;
    Var bias;
    std::size_t hidden = 0;
};

GruVars bind(Tape& tape, ParameterSet& params, const GruCell& cell);

// x·Wxᵀ + b for a block of inputs (rows = time steps).
Var gru_project_inputs(Tape& tape, const GruVars& cell, Var xs);
// One step given a row of gru_project_inputs output.
Var gru_step_projected(Tape& tape, const GruVars& cell, Var gx, Var h);
Var gru_step(Tape& tape, const GruVars& cell, Var x, Var h);

struct GradCheckResult {
    // Maximum relative error per parameter name.
    std::map<std::string, double> max_rel_error;
    // (analytic, numeric) at each group's worst coordinate.
    std::map<std::string, std::pair<double, double>> worst_pair;
    std::size_t coordinates_checked = 0;

    double worst() const;
};

// Compares tape gradients of the scalar built by `loss` against the five-point
// stencil [8(f(θ+ε) − f(θ−ε)) − (f(θ+2ε) − f(θ−2ε))] / 12ε on a random subsample of at most
// `coords_per_group` coordinates per parameter (all of them for smaller ones).
// Relative error is |ga − gn| / max(|ga|, |gn|, 1e-12).
GradCheckResult grad_check(ParameterSet& params, const std::function<Var(Tape&)>& loss, double eps,
                           std::uint64_t seed, std::size_t coords_per_group = 32);

}  // namespace geoprog::nn
