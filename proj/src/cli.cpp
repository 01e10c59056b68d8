#include "geoprog/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "geoprog/beam.hpp"
#include "geoprog/classifier.hpp"
#include "geoprog/data_io.hpp"
#include "geoprog/encoder.hpp"
#include "geoprog/error.hpp"
#include "geoprog/generator.hpp"
#include "geoprog/trainer.hpp"

namespace geoprog {

using nlohmann::json;

DslRegistry default_registry() { return DslRegistry::from_json(json::parse(default_registry_text())); }

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::optional<std::uint64_t> fallback) {
    if (flag) return *flag;
    if (fallback) return *fallback;
    if (const char* env = std::getenv("GEOPROG_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw UsageError(std::string("GEOPROG_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    return 0;
}

DslRegistry registry_from(const std::string& path) {
    return path.empty() ? default_registry() : DslRegistry::from_file(path);
}

// Output goes to a file when a path is given, else to the command's stream.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty()) {
        out << text;
    } else {
        write_file(path, text);
    }
}

ScoreRule parse_rule(const std::string& s) {
    if (s == "sum_log_prob") return ScoreRule::SumLogProb;
    if (s == "sum_prob") return ScoreRule::SumProb;
    throw UsageError("--score-rule must be sum_log_prob or sum_prob, got '" + s + "'");
}

PreprocessedProblem read_problem(const std::string& path, const DslRegistry& registry) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRecord, path + ": " + e.what());
    }
    if (j.is_object() && !j.contains("id")) j["id"] = "input";
    DatasetRecord r = DatasetRecord::from_json(j, 1);
    r.program = nullptr;
    return to_problem(r, registry);
}

struct TrainFlags {
    std::string config, data, out, registry, loss_log, cache_strategy;
    std::optional<std::size_t> hidden, layers, batch_size;
    std::optional<double> lr;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    bool human = false;
};

int do_train(const TrainFlags& f, std::ostream& out) {
    TrainConfig cfg;
    std::optional<std::uint64_t> config_seed;
    if (!f.config.empty()) {
        json j;
        try {
            j = json::parse(read_file(f.config));
        } catch (const json::exception& e) {
            throw UsageError("--config " + f.config + ": " + e.what());
        }
        cfg = TrainConfig::from_json(j);
        if (j.contains("seed")) config_seed = cfg.seed;
    }
    if (f.hidden) cfg.model.hidden = *f.hidden;
    if (f.layers) cfg.model.layers = *f.layers;
    if (f.batch_size) cfg.batch_size = *f.batch_size;
    if (f.lr) cfg.lr = *f.lr;
    if (f.epochs) cfg.epochs = *f.epochs;
    if (!f.cache_strategy.empty()) cfg.model.cache_strategy = parse_cache_strategy(f.cache_strategy);
    cfg.seed = resolve_seed(f.seed, config_seed);
    cfg.validate();

    const DslRegistry registry = registry_from(f.registry);
    const auto data = load_dataset(f.data, registry);
    if (data.empty()) throw Error(Errc::MalformedRecord, f.data + ": dataset has no records");
    if (!data.front().patches.empty()) cfg.model.patch_dim = data.front().patches.front().size();

    const std::string log_path = f.loss_log.empty() ? f.out + ".loss.csv" : f.loss_log;
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw Error(Errc::Io, "cannot write '" + log_path + "'");
    log << "epoch,total,type_loss,op_loss,oe_loss\n";
    LossParts last;
    ModelState state = train(cfg, registry, data, [&](const EpochLog& e) {
        log << e.epoch << ',' << fmt(e.mean.total) << ',' << fmt(e.mean.type_loss) << ',' << fmt(e.mean.op_loss)
            << ',' << fmt(e.mean.oe_loss) << '\n'
            << std::flush;
        last = e.mean;
    });
    save_checkpoint(state, f.out);
    if (f.human) {
        out << "trained " << cfg.epochs << " epochs on " << data.size() << " problems; final loss "
            << std::setprecision(6) << last.total << "\ncheckpoint: " << f.out << "\nloss log: " << log_path << '\n';
    } else {
        out << json{{"checkpoint", f.out},
                    {"loss_log", log_path},
                    {"epochs", cfg.epochs},
                    {"problems", data.size()},
                    {"config", cfg.to_json()},
                    {"final_loss",
                     {{"total", last.total}, {"type_loss", last.type_loss}, {"op_loss", last.op_loss},
                      {"oe_loss", last.oe_loss}}}}
                   .dump(2)
            << '\n';
    }
    return kExitOk;
}

struct EvalFlags {
    std::string model, data, out, pred_out, score_rule = "sum_log_prob";
    std::size_t topk = 10, beam = 10;
    bool human = false;
};

int do_eval(const EvalFlags& f, std::ostream& out) {
    BeamConfig beam;
    beam.beam_size = f.beam;
    beam.score_rule = parse_rule(f.score_rule);
    const ModelState state = load_checkpoint(f.model);
    const auto data = load_dataset(f.data, state.registry());
    for (const auto& p : data) {
        if (!p.gold || !p.problem_type) throw Error(Errc::MalformedRecord, "record '" + p.id + "' has no gold program");
    }
    const TopKReport report = evaluate(state, data, f.topk, beam);
    if (!f.pred_out.empty()) {
        std::string lines;
        for (const auto& p : data) {
            const auto cands = hbeam_decode(state, p, beam);
            const auto vocab = p.vocabulary(state.registry());
            json rec = {{"id", p.id}};
            if (!cands.empty()) {
                rec["type"] = state.registry().type(cands.front().program.problem_type).name;
                rec["program"] = to_nested(cands.front().program, vocab);
                rec["score"] = cands.front().score;
            } else {
                rec["program"] = json::array();
            }
            lines += rec.dump() + "\n";
        }
        write_file(f.pred_out, lines);
    }
    if (f.human) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << "problems:      " << report.total << "\ntop-1:         "
          << report.top1 << "\ntop-" << report.k << ":" << std::string(report.k < 10 ? 9 : 8, ' ') << report.topk
          << "\ntype accuracy: " << report.type_accuracy << "\nwrong operator: " << report.wrong_operator
          << "\nwrong operand:  " << report.wrong_operand << '\n';
        for (const auto& [name, t] : report.per_type) {
            s << "  " << name << ": n=" << t.count << " top-1=" << t.top1 << " top-" << report.k << "=" << t.topk
              << '\n';
        }
        emit(f.out, s.str(), out);
    } else {
        emit(f.out, report.to_json().dump(2) + "\n", out);
    }
    return kExitOk;
}

struct PredictFlags {
    std::string model, input, type, score_rule = "sum_log_prob";
    std::size_t beam = 10;
    bool human = false;
};

int do_predict(const PredictFlags& f, std::ostream& out) {
    const ModelState state = load_checkpoint(f.model);
    const auto& reg = state.registry();
    const PreprocessedProblem p = read_problem(f.input, reg);
    BeamConfig beam;
    beam.beam_size = f.beam;
    beam.score_rule = parse_rule(f.score_rule);
    if (!f.type.empty()) beam.type_override = reg.type_id(f.type);
    const auto cands = hbeam_decode(state, p, beam);
    const auto vocab = p.vocabulary(reg);
    if (f.human) {
        for (std::size_t i = 0; i < cands.size(); ++i) {
            out << std::setw(2) << i + 1 << ". " << std::fixed << std::setprecision(4) << std::setw(9)
                << cands[i].score << "  ";
            for (const auto& sub : to_surface(cands[i].program, vocab)) {
                out << sub.op << '(';
                for (std::size_t j = 0; j < sub.args.size(); ++j) out << (j ? "," : "") << sub.args[j];
                out << ") ";
            }
            out << '\n';
        }
        return kExitOk;
    }
    json list = json::array();
    for (std::size_t i = 0; i < cands.size(); ++i) {
        list.push_back({{"rank", i},
                        {"score", cands[i].score},
                        {"type", reg.type(cands[i].program.problem_type).name},
                        {"program", to_nested(cands[i].program, vocab)}});
    }
    out << json{{"id", p.id}, {"candidates", list}}.dump(2) << '\n';
    return kExitOk;
}

struct ExplainFlags {
    std::string model, input, out, type;
    bool human = false;
};

int do_explain(const ExplainFlags& f, std::ostream& out) {
    const ModelState state = load_checkpoint(f.model);
    const auto& reg = state.registry();
    const PreprocessedProblem p = read_problem(f.input, reg);
    DecodeOptions opt;
    opt.record_trace = true;
    if (!f.type.empty()) opt.type_override = reg.type_id(f.type);
    const DecodeResult r = greedy_decode(state, p, opt);
    const auto vocab = p.vocabulary(reg);
    std::ostringstream s;
    if (f.human) {
        for (std::size_t i = 0; i < r.trace.size(); ++i) {
            const auto& step = r.trace[i];
            s << "step " << i << " (" << (step.phase == Phase::Operator ? "operator" : "operand") << ") -> "
              << vocab.surface(step.chosen) << '\n';
            std::vector<std::size_t> idx(step.probs.size());
            for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::size_t a, std::size_t b) { return step.probs[a] > step.probs[b]; });
            for (std::size_t k = 0; k < std::min<std::size_t>(5, idx.size()) && step.probs[idx[k]] > 0; ++k) {
                s << "    " << std::left << std::setw(14) << vocab.surface(static_cast<SymbolId>(idx[k])) << std::right
                  << std::fixed << std::setprecision(4) << step.probs[idx[k]] << '\n';
            }
        }
    } else {
        // Rows are decode steps, columns are symbol surfaces.
        for (std::size_t k = 0; k < vocab.size(); ++k) {
            s << (k ? "," : "") << vocab.surface(static_cast<SymbolId>(k));
        }
        s << '\n';
        for (const auto& step : r.trace) {
            for (std::size_t k = 0; k < step.probs.size(); ++k) s << (k ? "," : "") << fmt(step.probs[k]);
            s << '\n';
        }
    }
    emit(f.out, s.str(), out);
    return kExitOk;
}

struct SynthFlags {
    std::string out, registry;
    std::size_t n = 0;
    std::optional<std::uint64_t> seed;
    double cal_fraction = 0.5;
};

int do_synth(const SynthFlags& f, std::ostream& out) {
    const DslRegistry registry = registry_from(f.registry);
    SynthProfile profile;
    profile.cal_fraction = f.cal_fraction;
    const std::uint64_t seed = resolve_seed(f.seed, std::nullopt);
    write_records(f.out, synth_generate(f.n, seed, registry, profile));
    out << json{{"out", f.out}, {"n", f.n}, {"seed", seed}}.dump() << '\n';
    return kExitOk;
}

struct AnalyzeFlags {
    std::string pred, gold, out;
    bool human = false;
};

std::map<std::string, SurfaceProgram> read_predictions(const std::string& path) {
    std::map<std::string, SurfaceProgram> preds;
    std::istringstream in(read_file(path));
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(text);
            preds[j.at("id").get<std::string>()] = surface_from_json(j.value("program", json::array()));
        } catch (const json::exception& e) {
            throw Error(Errc::MalformedRecord, path + " line " + std::to_string(line) + ": " + e.what());
        }
    }
    return preds;
}

json histogram_json(const std::map<std::size_t, std::size_t>& h) {
    json j = json::object();
    for (const auto& [k, v] : h) j[std::to_string(k)] = v;
    return j;
}

int do_analyze(const AnalyzeFlags& f, std::ostream& out) {
    const auto preds = read_predictions(f.pred);
    const auto gold_records = read_records(f.gold);
    std::vector<SurfaceProgram> gold_programs, pred_programs;
    std::size_t correct = 0, wrong_op = 0, wrong_oe = 0, missing = 0;
    for (const auto& r : gold_records) {
        SurfaceProgram g;
        try {
            g = surface_from_json(r.program.is_null() ? json::array() : r.program);
        } catch (const Error& e) {
            throw Error(Errc::MalformedRecord, "record '" + r.id + "': " + e.what());
        }
        gold_programs.push_back(g);
        const auto it = preds.find(r.id);
        SurfaceProgram p;
        if (it == preds.end()) {
            ++missing;
        } else {
            p = it->second;
            pred_programs.push_back(p);
        }
        const auto kind = first_divergence(p, g);
        if (!kind && it != preds.end()) {
            ++correct;
        } else if (kind == ErrorKind::WrongOperand) {
            ++wrong_oe;
        } else {
            ++wrong_op;
        }
    }
    const json report = {{"total", gold_records.size()},
                         {"correct", correct},
                         {"wrong", gold_records.size() - correct},
                         {"missing_predictions", missing},
                         {"attribution", {{"wrong_operator", wrong_op}, {"wrong_operand", wrong_oe}}},
                         {"operand_count_histogram",
                          {{"gold", histogram_json(operand_count_histogram(gold_programs))},
                           {"pred", histogram_json(operand_count_histogram(pred_programs))}}}};
    if (f.human) {
        std::ostringstream s;
        s << "problems: " << gold_records.size() << "  correct: " << correct << "\nwrong operator: " << wrong_op
          << "\nwrong operand:  " << wrong_oe << "\noperand counts (gold):";
        for (const auto& [k, v] : operand_count_histogram(gold_programs)) s << "  " << k << ":" << v;
        s << '\n';
        emit(f.out, s.str(), out);
    } else {
        emit(f.out, report.dump(2) + "\n", out);
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Geometry solution-program generator", "geoprog"};
    app.require_subcommand(1);

    TrainFlags tf;
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint plus loss CSV");
    train_cmd->add_option("--config", tf.config, "JSON training config")->check(CLI::ExistingFile);
    train_cmd->add_option("--data", tf.data, "training dataset (JSONL)")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", tf.out, "checkpoint path")->required();
    train_cmd->add_option("--registry", tf.registry, "DSL registry JSON (default: built-in)")->check(CLI::ExistingFile);
    train_cmd->add_option("--loss-log", tf.loss_log, "loss CSV path (default: <out>.loss.csv)");
    train_cmd->add_option("--hidden", tf.hidden)->check(CLI::PositiveNumber);
    train_cmd->add_option("--layers", tf.layers)->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch-size", tf.batch_size)->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", tf.lr)->check(CLI::PositiveNumber);
    train_cmd->add_option("--epochs", tf.epochs)->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--seed", tf.seed);
    train_cmd->add_option("--cache-strategy", tf.cache_strategy)
        ->check(CLI::IsMember({"last_operand_query", "operator_query", "operator_embedding"}));
    train_cmd->add_flag("--human", tf.human);

    EvalFlags ef;
    auto* eval_cmd = app.add_subcommand("eval", "top-k exact-match evaluation");
    eval_cmd->add_option("--model", ef.model)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", ef.data)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--topk", ef.topk)->check(CLI::PositiveNumber);
    eval_cmd->add_option("--beam", ef.beam)->check(CLI::PositiveNumber);
    eval_cmd->add_option("--score-rule", ef.score_rule);
    eval_cmd->add_option("--out", ef.out, "report path (default: stdout)");
    eval_cmd->add_option("--pred-out", ef.pred_out, "write top-1 predictions as JSONL");
    eval_cmd->add_flag("--human", ef.human);

    PredictFlags pf;
    auto* predict_cmd = app.add_subcommand("predict", "print the top-B programs for one problem");
    predict_cmd->add_option("--model", pf.model)->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--input", pf.input)->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--beam", pf.beam)->check(CLI::PositiveNumber);
    predict_cmd->add_option("--type", pf.type, "override the classifier's problem type");
    predict_cmd->add_option("--score-rule", pf.score_rule);
    predict_cmd->add_flag("--human", pf.human);

    ExplainFlags xf;
    auto* explain_cmd = app.add_subcommand("explain", "per-step probability matrix of the greedy decode (CSV)");
    explain_cmd->add_option("--model", xf.model)->required()->check(CLI::ExistingFile);
    explain_cmd->add_option("--input", xf.input)->required()->check(CLI::ExistingFile);
    explain_cmd->add_option("--out", xf.out, "CSV path (default: stdout)");
    explain_cmd->add_option("--type", xf.type, "override the classifier's problem type");
    explain_cmd->add_flag("--human", xf.human);

    SynthFlags sf;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
    synth_cmd->add_option("--out", sf.out)->required();
    synth_cmd->add_option("--n", sf.n)->required()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", sf.seed);
    synth_cmd->add_option("--cal-fraction", sf.cal_fraction)->check(CLI::Range(0.0, 1.0));
    synth_cmd->add_option("--registry", sf.registry)->check(CLI::ExistingFile);

    AnalyzeFlags af;
    auto* analyze_cmd = app.add_subcommand("analyze", "operand-count histogram and error attribution");
    analyze_cmd->add_option("--pred", af.pred, "predictions JSONL ({id, program})")->required()->check(CLI::ExistingFile);
    analyze_cmd->add_option("--gold", af.gold, "gold dataset JSONL")->required()->check(CLI::ExistingFile);
    analyze_cmd->add_option("--out", af.out, "report path (default: stdout)");
    analyze_cmd->add_flag("--human", af.human);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
        if (*eval_cmd && ef.topk > ef.beam) {
            throw UsageError("--topk (" + std::to_string(ef.topk) + ") must not exceed --beam (" +
                             std::to_string(ef.beam) + ")");
        }
        if (*train_cmd) return do_train(tf, out);
        if (*eval_cmd) return do_eval(ef, out);
        if (*predict_cmd) return do_predict(pf, out);
        if (*explain_cmd) return do_explain(xf, out);
        if (*synth_cmd) return do_synth(sf, out);
        if (*analyze_cmd) return do_analyze(af, out);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        if (e.code() == Errc::InvalidConfig) return kExitUsage;
        return e.is_data_error() ? kExitData : kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace geoprog
