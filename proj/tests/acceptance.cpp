// Acceptance experiments. Prints one PASS/FAIL line per criterion; the exit
// status is non-zero when any selected criterion fails.
//
//   acceptance               run all criteria
//   acceptance --criterion N run criterion N only

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "geoprog/beam.hpp"
#include "geoprog/cli.hpp"
#include "geoprog/data_io.hpp"
#include "geoprog/error.hpp"
#include "geoprog/generator.hpp"
#include "geoprog/trainer.hpp"
#include "json.hpp"

using namespace geoprog;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string g6(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.6g", v);
    return b;
}

std::string f4(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4f", v);
    return b;
}

std::vector<PreprocessedProblem> synth_problems(std::size_t n, std::uint64_t seed, const DslRegistry& reg) {
    std::vector<PreprocessedProblem> out;
    for (const auto& r : synth_generate(n, seed, reg)) out.push_back(to_problem(r, reg));
    return out;
}

ModelState random_state(const DslRegistry& reg, const std::vector<PreprocessedProblem>& corpus, std::size_t h,
                        std::uint64_t seed, double bias = 0.3) {
    ModelConfig cfg;
    cfg.hidden = h;
    cfg.layers = 1;
    cfg.patch_dim = corpus.front().patches.empty() ? 4 : corpus.front().patches.front().size();
    auto m = ModelState::create(reg, TextVocab::build(corpus), cfg, seed);
    std::mt19937_64 rng(seed * 7919 + 1);
    std::uniform_real_distribution<double> u(-bias, bias);
    for (auto& [name, p] : m.params())
        if (name.ends_with(".b") || name.ends_with("_bias"))
            for (auto& v : p.value) v = u(rng);
    return m;
}

DslRegistry tiny_registry() {
    return DslRegistry::from_json(json::parse(R"({
      "types": ["cal"],
      "operators": [{"surface": "f", "types": ["cal"], "min_args": 1, "max_args": 2},
                    {"surface": "g", "types": ["cal"], "min_args": 1, "max_args": 2}],
      "constants": [{"surface": "C_1", "value": 1}],
      "limits": {"max_op": 2, "max_oe": 2}
    })"));
}

constexpr double kGradScale = 2.5;

// 1. Gradient of the full objective against finite differences.
Outcome gradient_fidelity() {
    const auto t0 = Clock::now();
    const DslRegistry reg = default_registry();
    const auto data = synth_problems(2, 21, reg);
    std::string detail;
    double worst = 0.0;
    std::string worst_group;
    std::pair<double, double> worst_pair;
    std::size_t coords = 0;
    for (const auto& p : data) {
        ModelState m = random_state(reg, {p}, 8, 3);
        // Weights at unit scale keep every gradient well above the f64 difference floor.
        for (auto& [_, prm] : m.params())
            for (auto& v : prm.value) v *= kGradScale;
        const auto r = nn::grad_check(
            m.params(),
            [&](nn::Tape& t) {
                std::mt19937_64 rng(0);
                return example_loss(t, m, p, 1.0, rng);
            },
            1e-3, 17, 64);
        coords += r.coordinates_checked;
        for (const auto& [name, e] : r.max_rel_error)
            if (e >= worst) {
                worst = e;
                worst_group = name;
                worst_pair = r.worst_pair.at(name);
            }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-4 && secs < 60.0, "max rel err " + f4(worst * 1e4) + "e-4 (" + worst_group + ": analytic " +
                                              g6(worst_pair.first) + ", numeric " +
                                              g6(worst_pair.second) + "), " +
                                              std::to_string(coords) + " coords, " + f4(secs) + " s"};
}

// 2. Hierarchical beam equals exhaustive enumeration on the tiny instance.
Outcome beam_oracle() {
    const auto t0 = Clock::now();
    const DslRegistry reg = tiny_registry();
    std::mt19937_64 prng(5);
    std::normal_distribution<double> nd;
    std::vector<PreprocessedProblem> corpus = {preprocess("take 7 once", {{nd(prng), nd(prng), nd(prng), nd(prng)}})};
    corpus[0].id = "tiny";
    std::size_t mismatches = 0, compared = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ModelState m = random_state(reg, corpus, 6, seed, 1.0);
        for (auto& [_, p] : m.params())
            for (auto& v : p.value) v *= 3.0;  // sharpen the distributions
        for (auto rule : {ScoreRule::SumLogProb, ScoreRule::SumProb}) {
            BeamConfig cfg;
            cfg.beam_size = 64;
            cfg.score_rule = rule;
            const auto beam = hbeam_decode(m, corpus[0], cfg);
            const auto all = exhaustive_oracle(m, corpus[0], cfg);
            const std::size_t want = std::min<std::size_t>(64, all.size());
            if (beam.size() != want) {
                ++mismatches;
                continue;
            }
            for (std::size_t i = 0; i < want; ++i) {
                ++compared;
                if (!canonical_equal(beam[i].program, all[i].program) || std::abs(beam[i].score - all[i].score) > 1e-9)
                    ++mismatches;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 30.0, std::to_string(compared) + " ranked programs over 20 seeds x 2 rules, " +
                                                std::to_string(mismatches) + " mismatches, " + f4(secs) + " s"};
}

// 3. Beam width 1 reproduces greedy decoding.
Outcome greedy_degeneracy() {
    const DslRegistry reg = default_registry();
    const auto data = synth_problems(20, 33, reg);
    std::size_t pairs = 0, mismatches = 0, exceptions = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ModelState m = random_state(reg, data, 16, 100 + seed);
        for (const auto& p : data) {
            ++pairs;
            try {
                const auto g = greedy_decode(m, p);
                BeamConfig cfg;
                cfg.beam_size = 1;
                const auto b = hbeam_decode(m, p, cfg);
                const auto vocab = p.vocabulary(reg);
                if (b.size() != 1 || to_flat(b[0].program, vocab) != to_flat(g.program, vocab)) ++mismatches;
            } catch (const std::exception&) {
                ++exceptions;
            }
        }
    }
    return {mismatches == 0 && exceptions == 0, std::to_string(pairs) + " pairs, " + std::to_string(mismatches) +
                                                    " mismatches, " + std::to_string(exceptions) + " exceptions"};
}

// 4. Masked mass is exactly zero and distributions are normalized.
Outcome mask_soundness() {
    const DslRegistry reg = default_registry();
    const auto data = synth_problems(20, 44, reg);
    std::mt19937_64 rng(4);
    std::size_t violations = 0;
    double worst_sum = 0.0;
    std::vector<std::size_t> steps(reg.type_count(), 0);
    for (TypeId type = 0; type < static_cast<TypeId>(reg.type_count()); ++type) {
        for (std::uint64_t seed = 0; steps[static_cast<std::size_t>(type)] < 1000; ++seed) {
            const ModelState m = random_state(reg, data, 8, seed);
            for (const auto& p : data) {
                nn::Tape t;
                DecodeContext ctx = open_context(t, m, p, type);
                const auto vocab = p.vocabulary(reg);
                DecoderState st = initial_state(ctx);
                while (st.phase != Phase::Done) {
                    const auto out = query_step(ctx, st);
                    const auto probs = step_probs(ctx, out);
                    double s = 0.0;
                    for (std::size_t i = 0; i < probs.size(); ++i) {
                        s += probs[i];
                        const auto id = static_cast<SymbolId>(i);
                        const auto kind = vocab.kind(id);
                        const bool outside_dsl = !vocab.is_dynamic(id) && !reg.entry(id).in_type(type);
                        const bool wrong_mode = out.phase == Phase::Operator ? is_operand_kind(kind)
                                                                             : kind == SymbolKind::Operator;
                        const auto j = reg.cache_index(id);
                        const bool forward = j && *j >= st.sub_index;
                        if ((outside_dsl || wrong_mode || forward) && probs[i] != 0.0) ++violations;
                    }
                    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
                    std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
                    advance(ctx, st, out, static_cast<SymbolId>(pick(rng)));
                    ++steps[static_cast<std::size_t>(type)];
                }
            }
        }
    }
    std::string counts;
    for (std::size_t t = 0; t < steps.size(); ++t) counts += reg.type(static_cast<TypeId>(t)).name + "=" + std::to_string(steps[t]) + " ";
    return {violations == 0 && worst_sum <= 1e-6,
            "steps " + counts + "violations " + std::to_string(violations) + ", max |sum-1| " + g6(worst_sum)};
}

TrainConfig overfit_config() {
    TrainConfig cfg;
    cfg.model.hidden = 64;
    cfg.model.layers = 2;
    cfg.model.patch_dim = 16;
    cfg.lr = 2e-4;
    cfg.epochs = 300;
    cfg.batch_size = 4;
    cfg.seed = 1;
    return cfg;
}

struct OverfitResult {
    TopKReport report;
    double seconds = 0.0;
};

OverfitResult run_overfit(CacheStrategy strategy) {
    const auto t0 = Clock::now();
    const DslRegistry reg = default_registry();
    const auto data = synth_problems(200, 7, reg);
    TrainConfig cfg = overfit_config();
    cfg.model.cache_strategy = strategy;
    const ModelState m = train(cfg, reg, data);
    BeamConfig greedy;
    greedy.beam_size = 1;
    OverfitResult r;
    r.report = evaluate(m, data, 1, greedy);
    r.seconds = seconds_since(t0);
    return r;
}

std::string per_type(const TopKReport& r) {
    std::string s;
    for (const auto& [name, t] : r.per_type) s += " " + name + "=" + f4(t.top1);
    return s;
}

// 5. Overfit experiment.
Outcome overfit() {
    const auto r = run_overfit(CacheStrategy::LastOperandQuery);
    return {r.report.top1 >= 0.95 && r.report.type_accuracy == 1.0 && r.seconds < 600.0,
            "top-1 " + f4(r.report.top1) + " (" + per_type(r.report).substr(1) + "), type accuracy " +
                f4(r.report.type_accuracy) + ", " + f4(r.seconds) + " s"};
}

// 6. Beam search over greedy on held-out data after a short training run.
Outcome beam_uplift() {
    const DslRegistry reg = default_registry();
    const auto train_set = synth_problems(200, 61, reg);
    const auto held_out = synth_problems(100, 62, reg);
    int strictly = 0;
    bool never_worse = true;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        TrainConfig cfg = overfit_config();
        cfg.epochs = 50;
        cfg.seed = seed;
        const ModelState m = train(cfg, reg, train_set);
        BeamConfig g;
        g.beam_size = 1;
        BeamConfig b;
        b.beam_size = 10;
        const double greedy_top1 = evaluate(m, held_out, 1, g).top1;
        const double beam_top10 = evaluate(m, held_out, 10, b).topk;
        never_worse = never_worse && beam_top10 >= greedy_top1;
        strictly += beam_top10 > greedy_top1;
        detail += " seed " + std::to_string(seed) + ": " + f4(greedy_top1) + " -> " + f4(beam_top10) + ";";
    }
    return {never_worse && strictly >= 3, "greedy top-1 -> beam top-10:" + detail + " strictly greater in " +
                                              std::to_string(strictly) + "/5"};
}

// 7. All cache strategies complete the overfit experiment.
Outcome cache_strategies() {
    std::string detail;
    bool done = true;
    for (auto s : {CacheStrategy::LastOperandQuery, CacheStrategy::OperatorQuery, CacheStrategy::OperatorEmbedding}) {
        try {
            const auto r = run_overfit(s);
            detail += std::string(" ") + std::string(to_string(s)) + ": top-1 " + f4(r.report.top1) + " type " +
                      f4(r.report.type_accuracy) + " (" + f4(r.seconds) + " s);";
        } catch (const std::exception& e) {
            done = false;
            detail += std::string(" ") + std::string(to_string(s)) + ": failed: " + e.what() + ";";
        }
    }
    return {done, detail.substr(1)};
}

// 8. Serialization identities.
Outcome serialization() {
    const DslRegistry reg = default_registry();
    std::mt19937_64 rng(8);
    std::size_t failures = 0, programs = 0;
    std::vector<SymbolId> ops_by_type[2];
    for (SymbolId op : reg.operators())
        for (TypeId t = 0; t < 2; ++t)
            if (reg.entry(op).in_type(t)) ops_by_type[t].push_back(op);
    while (programs < 1000) {
        const std::size_t numbers = rng() % 5, elements = rng() % 5;
        const TypeId type = static_cast<TypeId>(rng() % 2);
        const DecodeVocabulary vocab(reg, numbers, elements);
        std::vector<SymbolId> fixed;
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            const auto id = static_cast<SymbolId>(i);
            const auto kind = vocab.kind(id);
            if (!is_operand_kind(kind) || kind == SymbolKind::CacheToken) continue;
            if (vocab.is_dynamic(id) || reg.entry(id).in_type(type)) fixed.push_back(id);
        }
        if (fixed.empty()) continue;
        SolutionProgram p;
        p.problem_type = type;
        const int subs = 1 + static_cast<int>(rng() % static_cast<unsigned>(reg.max_op()));
        for (int t = 0; t < subs; ++t) {
            SubProgram sub;
            sub.op = ops_by_type[type][rng() % ops_by_type[type].size()];
            const auto& e = reg.entry(sub.op);
            const int k = e.min_args + static_cast<int>(rng() % static_cast<unsigned>(e.max_args - e.min_args + 1));
            for (int j = 0; j < k; ++j) {
                const std::size_t pool = fixed.size() + static_cast<std::size_t>(t);
                const std::size_t pick = rng() % pool;
                sub.args.push_back(pick < fixed.size() ? fixed[pick]
                                                       : reg.cache_token(static_cast<int>(pick - fixed.size())));
            }
            p.subs.push_back(sub);
        }
        ++programs;
        try {
            validate(p, vocab);
            if (!canonical_equal(from_flat(to_flat(p, vocab), vocab, type), p)) ++failures;
        } catch (const std::exception&) {
            ++failures;
        }
    }

    const auto data = synth_problems(10, 9, reg);
    ModelState m = random_state(reg, data, 16, 2);
    m.round_to_storage();
    const auto path = std::filesystem::temp_directory_path() / "geoprog_acceptance.ckpt";
    save_checkpoint(m, path);
    const ModelState back = load_checkpoint(path, m.config());
    bool identical = checkpoint_bytes(back) == read_file(path);
    for (const auto& [name, p] : m.params()) identical = identical && back.params().get(name).value == p.value;
    std::filesystem::remove(path);
    return {failures == 0 && identical, std::to_string(programs) + " programs, " + std::to_string(failures) +
                                            " round-trip failures; checkpoint bit-identical: " +
                                            (identical ? "yes" : "no")};
}

// 9. execute_cal against direct arithmetic on every program with at most
// three sub-programs over {add, sub, mul, div} and operands {1, 2, 3, π}.
Outcome execution_oracle() {
    const DslRegistry reg = DslRegistry::from_json(json::parse(R"({
      "types": ["cal"],
      "operators": [
        {"surface": "add", "types": ["cal"], "min_args": 2, "max_args": 2, "exec": "add"},
        {"surface": "sub", "types": ["cal"], "min_args": 2, "max_args": 2, "exec": "sub"},
        {"surface": "mul", "types": ["cal"], "min_args": 2, "max_args": 2, "exec": "mul"},
        {"surface": "div", "types": ["cal"], "min_args": 2, "max_args": 2, "exec": "div"}
      ],
      "constants": [{"surface": "C_1", "value": 1}, {"surface": "C_2", "value": 2},
                    {"surface": "C_3", "value": 3}, {"surface": "C_pi", "value": 3.141592653589793}],
      "limits": {"max_op": 3, "max_oe": 2}
    })"));
    const DecodeVocabulary vocab(reg, 0, 0);
    const std::vector<std::string> ops = {"add", "sub", "mul", "div"};
    const double leaf[] = {1.0, 2.0, 3.0, std::numbers::pi};
    const std::vector<std::string> leaf_names = {"C_1", "C_2", "C_3", "C_pi"};

    std::size_t checked = 0, skipped = 0, mismatches = 0;
    SolutionProgram prog;
    prog.problem_type = 0;
    std::vector<double> results;

    auto apply = [](int op, double a, double b) {
        switch (op) {
            case 0: return a + b;
            case 1: return a - b;
            case 2: return a * b;
            default: return a / b;
        }
    };

    std::function<void(int)> walk = [&](int t) {
        if (t > 0) {
            bool div_zero = false;
            std::vector<double> cache;
            for (const auto& sub : prog.subs) {
                double x[2];
                for (int j = 0; j < 2; ++j) {
                    const auto& s = vocab.surface(sub.args[static_cast<std::size_t>(j)]);
                    if (s[0] == '#') {
                        x[j] = cache[static_cast<std::size_t>(s[1] - '0')];
                    } else {
                        for (std::size_t k = 0; k < 4; ++k)
                            if (leaf_names[k] == s) x[j] = leaf[k];
                    }
                }
                const int op = static_cast<int>(std::find(ops.begin(), ops.end(), vocab.surface(sub.op)) - ops.begin());
                if (op == 3 && x[1] == 0.0) div_zero = true;
                cache.push_back(apply(op, x[0], x[1]));
            }
            if (div_zero) {
                ++skipped;
            } else {
                ++checked;
                try {
                    const double got = execute_cal(prog, vocab, {});
                    const double want = cache.back();
                    if (!(got == want || (std::isnan(got) && std::isnan(want)))) ++mismatches;
                } catch (const std::exception&) {
                    ++mismatches;
                }
            }
        }
        if (t == 3) return;
        std::vector<SymbolId> operands;
        for (const auto& s : leaf_names) operands.push_back(*reg.lookup(s));
        for (int j = 0; j < t; ++j) operands.push_back(reg.cache_token(j));
        for (const auto& op : ops)
            for (SymbolId a : operands)
                for (SymbolId b : operands) {
                    prog.subs.push_back({*reg.lookup(op), {a, b}});
                    walk(t + 1);
                    prog.subs.pop_back();
                }
    };
    walk(0);
    return {mismatches == 0 && checked > 0, std::to_string(checked) + " programs checked, " + std::to_string(skipped) +
                                                " division-by-zero cases excluded, " + std::to_string(mismatches) +
                                                " mismatches"};
}

int cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    if (code != 0) std::cerr << err.str();
    return code;
}

// 10. Training and synthesis are byte-deterministic per seed.
Outcome determinism() {
    const auto dir = std::filesystem::temp_directory_path() / "geoprog_acceptance_det";
    std::filesystem::create_directories(dir);
    const auto p = [&](const char* name) { return (dir / name).string(); };
    bool ok = cli({"synth", "--out", p("a.jsonl"), "--n", "40", "--seed", "11"}) == 0 &&
              cli({"synth", "--out", p("b.jsonl"), "--n", "40", "--seed", "11"}) == 0;
    const bool synth_same = ok && read_file(p("a.jsonl")) == read_file(p("b.jsonl"));
    ok = cli({"train", "--data", p("a.jsonl"), "--out", p("a.ckpt"), "--hidden", "16", "--epochs", "3", "--batch-size",
              "8", "--seed", "5"}) == 0 &&
         cli({"train", "--data", p("a.jsonl"), "--out", p("b.ckpt"), "--hidden", "16", "--epochs", "3", "--batch-size",
              "8", "--seed", "5"}) == 0;
    const bool train_same = ok && read_file(p("a.ckpt")) == read_file(p("b.ckpt"));
    std::filesystem::remove_all(dir);
    return {synth_same && train_same, std::string("synth identical: ") + (synth_same ? "yes" : "no") +
                                          ", train checkpoints identical: " + (train_same ? "yes" : "no")};
}

// 11. Operand-count histogram of synthetic proofs and attribution totals.
Outcome analysis_tooling() {
    const DslRegistry reg = default_registry();
    const auto data = synth_problems(200, 71, reg);
    std::vector<SolutionProgram> prv;
    std::size_t prv_ops = 0;
    for (const auto& p : data)
        if (*p.problem_type == reg.type_id("prv")) {
            prv.push_back(*p.gold);
            prv_ops += p.gold->subs.size();
        }
    const auto hist = operand_count_histogram(std::span<const SolutionProgram>(prv));
    const bool hist_ok = hist == std::map<std::size_t, std::size_t>{{1, prv_ops}};

    const auto dir = std::filesystem::temp_directory_path() / "geoprog_acceptance_an";
    std::filesystem::create_directories(dir);
    const auto p = [&](const char* name) { return (dir / name).string(); };
    write_records(p("d.jsonl"), synth_generate(60, 72, reg));
    bool ok = cli({"train", "--data", p("d.jsonl"), "--out", p("m.ckpt"), "--hidden", "16", "--epochs", "8",
                   "--batch-size", "4", "--seed", "3"}) == 0;
    std::ostringstream eval_out, an_out, err;
    ok = ok && run_cli({"eval", "--model", p("m.ckpt"), "--data", p("d.jsonl"), "--topk", "1", "--beam", "1",
                        "--pred-out", p("pred.jsonl")},
                       eval_out, err) == 0;
    ok = ok && run_cli({"analyze", "--pred", p("pred.jsonl"), "--gold", p("d.jsonl")}, an_out, err) == 0;
    std::filesystem::remove_all(dir);
    if (!ok) return {false, "pipeline failed: " + err.str()};
    const json ev = json::parse(eval_out.str());
    const json an = json::parse(an_out.str());
    const auto wrong_top1 = static_cast<long>(std::lround((1.0 - ev["top1"].get<double>()) * ev["total"].get<double>()));
    const long attributed = an["attribution"]["wrong_operator"].get<long>() + an["attribution"]["wrong_operand"].get<long>();
    const bool sums = attributed == wrong_top1 && an["wrong"].get<long>() == wrong_top1;
    return {hist_ok && sums, "prv histogram {1: " + std::to_string(hist.contains(1) ? hist.at(1) : 0) + "} over " +
                                 std::to_string(prv_ops) + " operators; attributed " + std::to_string(attributed) +
                                 " of " + std::to_string(wrong_top1) + " wrong top-1 predictions"};
}

struct Criterion {
    const char* name;
    Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"gradient fidelity", gradient_fidelity},   {"beam-oracle equivalence", beam_oracle},
    {"greedy degeneracy", greedy_degeneracy},   {"mask soundness", mask_soundness},
    {"overfit experiment", overfit},            {"beam-vs-greedy uplift", beam_uplift},
    {"cache-strategy experiment", cache_strategies}, {"serialization and persistence", serialization},
    {"execution oracle", execution_oracle},     {"determinism", determinism},
    {"analysis tooling", analysis_tooling},
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::cerr << "usage: acceptance [--criterion N]\n";
            return 2;
        }
    }
    constexpr int n = static_cast<int>(std::size(kCriteria));
    if (only < 0 || only > n) {
        std::cerr << "criterion must be in 1.." << n << "\n";
        return 2;
    }
    bool all = true;
    for (int i = 1; i <= n; ++i) {
        if (only != 0 && i != only) continue;
        Outcome o;
        try {
            o = kCriteria[i - 1].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i << " (" << kCriteria[i - 1].name
                  << "): " << o.detail << std::endl;
    }
    return all ? 0 : 1;
}
