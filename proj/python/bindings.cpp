#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "geoprog/beam.hpp"
#include "geoprog/cli.hpp"
#include "geoprog/data_io.hpp"
#include "geoprog/error.hpp"
#include "geoprog/generator.hpp"
#include "geoprog/trainer.hpp"

namespace py = pybind11;
using namespace geoprog;
using nlohmann::json;

namespace {

DslRegistry registry_or_default(const std::string& path) {
    return path.empty() ? default_registry() : DslRegistry::from_file(path);
}

PreprocessedProblem problem_from_json(const std::string& record, const DslRegistry& reg) {
    json j = json::parse(record);
    if (!j.contains("id")) j["id"] = "input";
    return to_problem(DatasetRecord::from_json(j), reg);
}

std::string predict(const ModelState& m, const std::string& record, std::size_t beam,
                    const std::optional<std::string>& type, const std::string& rule) {
    const auto& reg = m.registry();
    const auto p = problem_from_json(record, reg);
    BeamConfig cfg;
    cfg.beam_size = beam;
    cfg.score_rule = rule == "sum_prob" ? ScoreRule::SumProb : ScoreRule::SumLogProb;
    if (type) cfg.type_override = reg.type_id(*type);
    std::vector<ScoredProgram> cands;
    {
        py::gil_scoped_release unlock;
        cands = hbeam_decode(m, p, cfg);
    }
    const auto vocab = p.vocabulary(reg);
    json out = json::array();
    for (std::size_t i = 0; i < cands.size(); ++i)
        out.push_back({{"rank", i},
                       {"score", cands[i].score},
                       {"type", reg.type(cands[i].program.problem_type).name},
                       {"program", to_nested(cands[i].program, vocab)}});
    return out.dump();
}

std::string greedy(const ModelState& m, const std::string& record, const std::optional<std::string>& type) {
    const auto& reg = m.registry();
    const auto p = problem_from_json(record, reg);
    DecodeOptions opt;
    opt.record_trace = true;
    if (type) opt.type_override = reg.type_id(*type);
    const auto r = greedy_decode(m, p, opt);
    const auto vocab = p.vocabulary(reg);
    json steps = json::array();
    for (const auto& s : r.trace) steps.push_back({{"symbol", vocab.surface(s.chosen)}, {"probs", s.probs}});
    return json{{"program", to_nested(r.program, vocab)},
                {"flat", to_flat(r.program, vocab)},
                {"log_prob", r.log_prob},
                {"steps", steps}}
        .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of geoprog";
    static py::exception<Error> exc(m, "GeoprogError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(exc, e.what());
        } catch (const json::exception& e) {
            py::set_error(PyExc_ValueError, e.what());
        }
    });

    m.def("default_registry", [] { return default_registry_text(); }, "Built-in DSL registry document (JSON text).");

    m.def(
        "synth",
        [](std::size_t n, std::uint64_t seed, double cal_fraction, const std::string& registry) {
            SynthProfile profile;
            profile.cal_fraction = cal_fraction;
            return records_to_jsonl(synth_generate(n, seed, registry_or_default(registry), profile));
        },
        py::arg("n"), py::arg("seed") = 0, py::arg("cal_fraction") = 0.5, py::arg("registry") = "",
        "Synthetic dataset as JSONL text.");

    m.def(
        "execute_cal",
        [](const std::string& record, const std::string& registry) {
            const DslRegistry reg = registry_or_default(registry);
            const auto p = problem_from_json(record, reg);
            if (!p.gold) throw Error(Errc::MalformedRecord, "record has no program");
            return execute_cal(*p.gold, p.vocabulary(reg), p.number_values());
        },
        py::arg("record"), py::arg("registry") = "", "Executes a cal record's program on its numbers.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release unlock;
                code = run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line interface in-process: (exit code, stdout, stderr).");

    py::class_<ModelState>(m, "Model")
        .def_static("load", [](const std::string& path) { return load_checkpoint(path); }, py::arg("path"))
        .def("save", [](const ModelState& s, const std::string& path) { save_checkpoint(s, path); }, py::arg("path"))
        .def_property_readonly("config", [](const ModelState& s) { return s.config().to_json().dump(); })
        .def_property_readonly("parameter_count",
                               [](const ModelState& s) {
                                   std::size_t n = 0;
                                   for (const auto& [_, p] : s.params()) n += p.size();
                                   return n;
                               })
        .def("predict", &predict, py::arg("record"), py::arg("beam") = 10, py::arg("type") = std::nullopt,
             py::arg("score_rule") = "sum_log_prob", "Top-beam programs as a JSON list.")
        .def("greedy", &greedy, py::arg("record"), py::arg("type") = std::nullopt,
             "Greedy decode with per-step distributions as JSON.")
        .def(
            "evaluate",
            [](const ModelState& s, const std::string& data, std::size_t k, std::size_t beam) {
                const auto problems = load_dataset(data, s.registry());
                BeamConfig cfg;
                cfg.beam_size = beam;
                py::gil_scoped_release unlock;
                return evaluate(s, problems, k, cfg).to_json().dump();
            },
            py::arg("data"), py::arg("k") = 1, py::arg("beam") = 1, "Top-k report as JSON.");

    m.def(
        "train",
        [](const std::string& data, const std::string& config, std::optional<std::uint64_t> seed,
           const std::string& registry) {
            const DslRegistry reg = registry_or_default(registry);
            TrainConfig cfg = TrainConfig::from_json(json::parse(config.empty() ? "{}" : config));
            if (seed) cfg.seed = *seed;
            const auto problems = load_dataset(data, reg);
            if (!problems.empty() && !problems.front().patches.empty())
                cfg.model.patch_dim = problems.front().patches.front().size();
            cfg.validate();
            py::gil_scoped_release unlock;
            return train(cfg, reg, problems);
        },
        py::arg("data"), py::arg("config") = "", py::arg("seed") = std::nullopt, py::arg("registry") = "",
        "Trains a model on a JSONL dataset.");
}
