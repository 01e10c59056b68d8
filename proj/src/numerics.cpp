#include "geoprog/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "geoprog/error.hpp"

namespace geoprog::nn {

std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask,
                                   SoftmaxMode mode) {
    if (logits.size() != mask.size()) {
        throw Error(Errc::ShapeMismatch, "masked_softmax: " + std::to_string(logits.size()) +
                                             " logits vs mask of " + std::to_string(mask.size()));
    }
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
        throw Error(Errc::AllMasked, "every candidate is masked");
    }
    std::vector<double> out(logits.size(), 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (mode == SoftmaxMode::Literal || mask[j]) mx = std::max(mx, logits[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (mode == SoftmaxMode::Literal || mask[j]) {
            const double e = std::exp(logits[j] - mx);
            z += e;
            if (mask[j]) out[j] = e;
        }
    }
    for (double& p : out) p /= z;
    return out;
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < values.size(); ++j) {
        if (values[j] > values[best]) best = j;
    }
    return best;
}

void GruCell::declare(ParameterSet& params) const {
    params.add(prefix + ".wx", 3 * hidden, input);
    params.add(prefix + ".wh_gates", 2 * hidden, hidden);
    params.add(prefix + ".wh_cand", hidden, hidden);
    params.add(prefix + ".b", 1, 3 * hidden);
}

GruVars bind(Tape& tape, ParameterSet& params, const GruCell& cell) {
    GruVars v;
    v.wx = tape.param(params.get(cell.prefix + ".wx"));
    v.wh_gates = tape.param(params.get(cell.prefix + ".wh_gates"));
    v.wh_cand = tape.param(params.get(cell.prefix + ".wh_cand"));
    v.bias = tape.param(params.get(cell.prefix + ".b"));
    v.hidden = cell.hidden;
    return v;
}

Var gru_project_inputs(Tape& tape, const GruVars& cell, Var xs) {
    return tape.add_bias(tape.matmul_nt(xs, cell.wx), cell.bias);
}

Var gru_step_projected(Tape& tape, const GruVars& cell, Var gx, Var h) {
    const std::size_t d = cell.hidden;
    if (tape.cols(h) != d || tape.rows(h) != 1 || tape.cols(gx) != 3 * d) {
        throw Error(Errc::ShapeMismatch, "gru step: hidden " + std::to_string(tape.cols(h)) +
                                             " vs cell " + std::to_string(d));
    }
    Var gates = tape.sigmoid(tape.add(tape.slice_cols(gx, 0, 2 * d), tape.matmul_nt(h, cell.wh_gates)));
    Var z = tape.slice_cols(gates, 0, d);
    Var r = tape.slice_cols(gates, d, d);
    Var cand = tape.tanh(tape.add(tape.slice_cols(gx, 2 * d, d), tape.matmul_nt(tape.mul(r, h), cell.wh_cand)));
    return tape.add(h, tape.mul(z, tape.sub(cand, h)));
}

Var gru_step(Tape& tape, const GruVars& cell, Var x, Var h) {
    return gru_step_projected(tape, cell, gru_project_inputs(tape, cell, x), h);
}

double GradCheckResult::worst() const {
    double w = 0.0;
    for (const auto& [_, e] : max_rel_error) w = std::max(w, e);
    return w;
}

GradCheckResult grad_check(ParameterSet& params, const std::function<Var(Tape&)>& loss, double eps,
                           std::uint64_t seed, std::size_t coords_per_group) {
    if (!(eps >= 1e-7 && eps <= 1e-2)) {
        throw Error(Errc::InvalidConfig, "grad_check eps must lie in [1e-7, 1e-2]");
    }
    Tape tape;
    auto evaluate = [&]() {
        tape.clear();
        const double v = tape.scalar(loss(tape));
        if (!std::isfinite(v)) {
            throw Error(Errc::NonFiniteLoss, "loss evaluated to " + std::to_string(v));
        }
        return v;
    };

    params.zero_grad();
    {
        tape.clear();
        Var root = loss(tape);
        if (!std::isfinite(tape.scalar(root))) {
            throw Error(Errc::NonFiniteLoss, "loss is not finite at the check point");
        }
        tape.backward(root);
    }

    GradCheckResult result;
    std::mt19937_64 rng(seed);
    for (auto& [name, p] : params) {
        std::vector<std::size_t> coords(p.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > coords_per_group) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(coords_per_group);
        }
        double worst = 0.0;
        for (std::size_t c : coords) {
            const double saved = p.value[c];
            auto at = [&](double delta) {
                p.value[c] = saved + delta;
                return evaluate();
            };
            const double d1 = at(eps) - at(-eps);
            const double d2 = at(2.0 * eps) - at(-2.0 * eps);
            p.value[c] = saved;
            const double numeric = (8.0 * d1 - d2) / (12.0 * eps);
            const double analytic = p.grad[c];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel >= worst) {
                worst = rel;
                result.worst_pair[name] = {analytic, numeric};
            }
        }
        result.max_rel_error[name] = worst;
        result.coordinates_checked += coords.size();
    }
    return result;
}

}  // namespace geoprog::nn
