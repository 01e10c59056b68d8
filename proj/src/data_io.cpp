#include "geoprog/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "geoprog/error.hpp"
#include "geoprog/program.hpp"

namespace geoprog {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::Io, "write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------- records

json DatasetRecord::to_json() const {
    json j = {{"id", id}, {"type", type}, {"text", text}};
    if (!patches.empty()) j["patches"] = patches;
    if (!program.is_null()) j["program"] = program;
    return j;
}

DatasetRecord DatasetRecord::from_json(const json& j, std::size_t line) {
    auto bad = [&](const std::string& what) {
        return Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": " + what);
    };
    if (!j.is_object()) throw bad("record is not an object");
    DatasetRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.type = j.value("type", std::string());
        r.text = j.at("text").get<std::string>();
        if (j.contains("patches") && !j.at("patches").is_null()) {
            r.patches = j.at("patches").get<std::vector<std::vector<double>>>();
        }
        if (j.contains("program")) r.program = j.at("program");
    } catch (const json::exception& e) {
        throw bad(e.what());
    }
    if (!r.program.is_null() && !r.program.is_array()) throw bad("program must be an array");
    return r;
}

std::vector<DatasetRecord> read_records(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::vector<DatasetRecord> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": " + e.what());
        }
        out.push_back(DatasetRecord::from_json(j, line));
    }
    return out;
}

std::string records_to_jsonl(const std::vector<DatasetRecord>& records) {
    std::string s;
    for (const auto& r : records) {
        s += r.to_json().dump();
        s += '\n';
    }
    return s;
}

void write_records(const fs::path& path, const std::vector<DatasetRecord>& records) {
    write_file(path, records_to_jsonl(records));
}

namespace {

void collect_surfaces(const json& j, std::vector<std::string>& out) {
    if (j.is_string()) {
        out.push_back(j.get<std::string>());
    } else if (j.is_array()) {
        for (const auto& e : j) collect_surfaces(e, out);
    } else if (j.is_object()) {
        if (j.contains("op")) collect_surfaces(j.at("op"), out);
        if (j.contains("args")) collect_surfaces(j.at("args"), out);
    }
}

}  // namespace

PreprocessedProblem to_problem(const DatasetRecord& record, const DslRegistry& registry) {
    PreprocessedProblem p = preprocess(record.text, record.patches);
    p.id = record.id;
    if (!record.type.empty()) p.problem_type = registry.type_id(record.type);
    if (!record.program.is_null()) {
        if (!p.problem_type) throw Error(Errc::MalformedRecord, "record '" + record.id + "' has a program but no type");
        const DecodeVocabulary vocab = p.vocabulary(registry);
        std::vector<std::string> surfaces;
        collect_surfaces(record.program, surfaces);
        for (const auto& s : surfaces) {
            if (!vocab.lookup(s)) {
                throw Error(Errc::UnresolvableSymbol, "record '" + record.id + "': symbol '" + s + "'");
            }
        }
        try {
            p.gold = parse_program(record.program, vocab, *p.problem_type);
            validate(*p.gold, vocab);
        } catch (const Error& e) {
            throw Error(e.code(), "record '" + record.id + "': " + e.what());
        }
    }
    return p;
}

std::vector<PreprocessedProblem> load_dataset(const fs::path& path, const DslRegistry& registry) {
    std::vector<PreprocessedProblem> out;
    for (const auto& r : read_records(path)) out.push_back(to_problem(r, registry));
    return out;
}

// ---------------------------------------------------------------- synthesis

namespace {

struct CalTemplate {
    int numbers;
    const char* text;  // {0}.. stand for the numbers in order of appearance
    std::vector<std::pair<const char*, std::vector<const char*>>> program;
};

const std::vector<CalTemplate>& cal_templates() {
    static const std::vector<CalTemplate> t = {
        {2, "find the area of a rectangle with length {0} and width {1}.", {{"mul", {"N_0", "N_1"}}}},
        {2, "a circle has radius {0} and a chord of length {1}. find its area.", {{"Circle_R_Area", {"N_0"}}}},
        {3, "the sum of {0} and {1} is split into {2} equal parts. find one part.",
         {{"add", {"N_0", "N_1"}}, {"div", {"#0", "N_2"}}}},
        {2, "two angles of a triangle measure {0} degrees and {1} degrees. find the third angle.",
         {{"sub", {"C_180", "N_0"}}, {"sub", {"#0", "N_1"}}}},
        {2, "an angle of {0} degrees sits beside a side of length {1}. find the sine of the angle.",
         {{"sin_deg", {"N_0"}}}},
        {2, "a circle has diameter {0} and a chord of length {1}. find its area.", {{"div", {"N_0", "C_2"}}, {"Circle_R_Area", {"#0"}}}},
        {2, "find {0} raised to the power {1}.", {{"pow", {"N_0", "N_1"}}}},
        {2, "a rod of length {0} leans at {1} degrees to the ground. find its shadow.",
         {{"cos_deg", {"N_1"}}, {"mul", {"#0", "N_0"}}}},
        {2, "angles of {0} degrees and {1} degrees are drawn. find the supplement of the first angle.",
         {{"sub", {"C_180", "N_0"}}}},
        {2, "find half the sum of {0} and {1}.", {{"add", {"N_0", "N_1"}}, {"div", {"#0", "C_2"}}}},
        {2, "a wheel of radius {0} turns {1} times. find the distance it rolls.",
         {{"mul", {"C_2", "C_pi"}}, {"mul", {"#0", "N_0"}}, {"mul", {"#1", "N_1"}}}},
        {2, "find what remains when {0} is taken from {1}.", {{"sub", {"N_1", "N_0"}}}},
        {4, "a box has sides {0}, {1} and {2}. find its volume shared among {3} boxes.",
         {{"mul", {"N_0", "N_1"}}, {"mul", {"#0", "N_2"}}, {"div", {"#1", "N_3"}}}},
        {2, "find the perimeter of a rectangle with sides {0} and {1}.", {{"add", {"N_0", "N_1"}}, {"mul", {"#0", "C_2"}}}},
        {3, "find the total of {0}, {1} and {2}.", {{"add", {"N_0", "N_1", "N_2"}}}},
        {3, "find the product of {0} and {1} minus {2}.", {{"mul", {"N_0", "N_1"}}, {"sub", {"#0", "N_2"}}}},
    };
    return t;
}

struct PrvRule {
    const char* op;
    const char* cue;
};

const std::vector<PrvRule>& prv_rules() {
    static const std::vector<PrvRule> r = {
        {"R_0", "the sum rule"},        {"R_1", "the vertical rule"},  {"R_2", "the base rule"},
        {"R_3", "the alternate rule"},  {"R_4", "the exterior rule"},  {"R_5", "the bisector rule"},
        {"R_6", "the midpoint rule"},   {"R_7", "the tangent rule"},   {"congruent", "the congruence test"},
        {"similar", "the similarity test"},
    };
    return r;
}

std::string fill(const std::string& text, const std::vector<int>& values) {
    std::string out = text;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::string key = "{" + std::to_string(i) + "}";
        out.replace(out.find(key), key.size(), std::to_string(values[i]));
    }
    return out;
}

template <class T>
std::size_t pick(std::mt19937_64& rng, const std::vector<T>& v) {
    return std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng);
}

json nested(const std::vector<std::pair<std::string, std::vector<std::string>>>& subs) {
    json j = json::array();
    for (const auto& [op, args] : subs) j.push_back({{"op", op}, {"args", args}});
    return j;
}

std::vector<std::vector<double>> synth_patches(std::mt19937_64& rng, const SynthProfile& profile, bool cal) {
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<std::vector<double>> patches(profile.patch_count, std::vector<double>(profile.patch_dim));
    for (auto& patch : patches) {
        for (std::size_t d = 0; d < profile.patch_dim; ++d) {
            const bool first_half = d < profile.patch_dim / 2;
            const double bias = (first_half == cal) ? 1.0 : -1.0;
            // Stored at 4 decimals so the JSON text is short and exact on re-read.
            patch[d] = std::round((bias + 0.5 * noise(rng)) * 1e4) / 1e4;
        }
    }
    return patches;
}

DatasetRecord synth_cal(std::mt19937_64& rng) {
    const auto& templates = cal_templates();
    const CalTemplate& t = templates[pick(rng, templates)];
    std::uniform_int_distribution<int> num(1, 99);
    std::vector<int> values;
    for (int i = 0; i < t.numbers; ++i) values.push_back(num(rng));
    if (std::string(t.program.front().first) == "pow") values[1] = 1 + values[1] % 3;
    DatasetRecord r;
    r.type = "cal";
    r.text = fill(t.text, values);
    std::vector<std::pair<std::string, std::vector<std::string>>> subs;
    for (const auto& [op, args] : t.program) subs.emplace_back(op, std::vector<std::string>(args.begin(), args.end()));
    r.program = nested(subs);
    return r;
}

std::string element_glyph(std::mt19937_64& rng) {
    static const std::vector<std::string> letters = {"A", "B", "C", "D", "E", "F", "G", "H", "K", "M", "P", "Q", "S", "T", "U", "W"};
    const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
    const std::size_t count = kind == 2 ? 1 : 3;
    std::string g = kind == 0 ? "△" : (kind == 1 ? "∠" : "⊙");
    std::vector<std::string> used;
    while (used.size() < count) {
        const std::string& l = letters[pick(rng, letters)];
        if (std::find(used.begin(), used.end(), l) == used.end()) used.push_back(l);
    }
    for (const auto& l : used) g += l;
    return g;
}

DatasetRecord synth_prv(std::mt19937_64& rng, const SynthProfile& profile) {
    const int n_elements = std::uniform_int_distribution<int>(2, 4)(rng);
    std::vector<std::string> elements;
    while (static_cast<int>(elements.size()) < n_elements) {
        std::string g = element_glyph(rng);
        if (std::find(elements.begin(), elements.end(), g) == elements.end()) elements.push_back(g);
    }
    std::string text = "given ";
    for (std::size_t i = 0; i < elements.size(); ++i) {
        if (i > 0) text += i + 1 == elements.size() ? " and " : ", ";
        text += elements[i];
    }
    text += ". prove the claim";
    // Within one record every clause uses its own rule and its own element, so
    // each clause is identified by either of them.
    const int clauses = std::uniform_int_distribution<int>(profile.prv_min_subs,
                                                           std::min(profile.prv_max_subs, n_elements))(rng);
    std::vector<std::size_t> rule_order(prv_rules().size()), element_order(elements.size());
    std::iota(rule_order.begin(), rule_order.end(), 0);
    std::iota(element_order.begin(), element_order.end(), 0);
    std::shuffle(rule_order.begin(), rule_order.end(), rng);
    std::shuffle(element_order.begin(), element_order.end(), rng);
    std::vector<std::pair<std::string, std::vector<std::string>>> subs;
    for (int c = 0; c < clauses; ++c) {
        const PrvRule& rule = prv_rules()[rule_order[static_cast<std::size_t>(c)]];
        const std::size_t e = element_order[static_cast<std::size_t>(c)];
        text += c == 0 ? " using " : ", then using ";
        text += std::string(rule.cue) + " on " + elements[e];
        subs.push_back({rule.op, {"E_" + std::to_string(e)}});
    }
    text += ".";
    DatasetRecord r;
    r.type = "prv";
    r.text = text;
    r.program = nested(subs);
    return r;
}

}  // namespace

std::vector<DatasetRecord> synth_generate(std::size_t n, std::uint64_t seed, const DslRegistry& registry,
                                          const SynthProfile& profile) {
    if (n < 1) throw Error(Errc::InvalidConfig, "n must be >= 1");
    if (!(profile.cal_fraction >= 0.0 && profile.cal_fraction <= 1.0) || profile.prv_min_subs < 1 ||
        profile.prv_max_subs < profile.prv_min_subs || profile.prv_max_subs > registry.max_op() ||
        profile.patch_dim < 2) {
        throw Error(Errc::InvalidConfig, "invalid synthesis profile");
    }
    registry.type_id("cal");
    registry.type_id("prv");
    std::mt19937_64 rng(seed);
    // Exact cal share: the first round(n·fraction) slots are cal, then shuffled.
    const auto n_cal = static_cast<std::size_t>(std::llround(static_cast<double>(n) * profile.cal_fraction));
    std::vector<bool> is_cal(n, false);
    std::fill(is_cal.begin(), is_cal.begin() + static_cast<std::ptrdiff_t>(n_cal), true);
    std::shuffle(is_cal.begin(), is_cal.end(), rng);

    std::vector<DatasetRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        DatasetRecord r = is_cal[i] ? synth_cal(rng) : synth_prv(rng, profile);
        r.id = "synth-" + std::to_string(seed) + "-" + std::to_string(i);
        r.patches = synth_patches(rng, profile, is_cal[i]);
        // Every generated program must resolve against the registry.
        to_problem(r, registry);
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------- checkpoints

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::string& s, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    s.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& s, std::size_t& pos) {
    if (pos + sizeof(T) > s.size()) throw Error(Errc::CorruptTensor, "checkpoint truncated in preamble");
    T v;
    std::memcpy(&v, s.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

std::string checkpoint_bytes(const ModelState& state) {
    json tensors = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, p] : state.params()) {
        tensors.push_back({{"name", name}, {"rows", p.rows}, {"cols", p.cols}, {"offset", offset}});
        offset += p.size() * sizeof(float);
    }
    const json header = {{"format", std::string(kCheckpointMagic)},
                         {"version", kCheckpointVersion},
                         {"registry", state.registry().document()},
                         {"vocabulary", state.vocab().words()},
                         {"config", state.config().to_json()},
                         {"tensors", tensors}};
    const std::string h = header.dump();
    std::string out(kCheckpointMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, h.size());
    out += h;
    out.reserve(out.size() + offset);
    for (const auto& [_, p] : state.params()) {
        for (double v : p.value) {
            if (!std::isfinite(v)) throw Error(Errc::NonFiniteLoss, "parameter '" + p.name + "' is not finite");
            put<float>(out, static_cast<float>(v));
        }
    }
    return out;
}

namespace {

struct ParsedCheckpoint {
    json header;
    std::size_t data_start = 0;
};

ParsedCheckpoint parse_header(const std::string& bytes) {
    if (bytes.compare(0, kCheckpointMagic.size(), kCheckpointMagic) != 0) {
        throw Error(Errc::CorruptTensor, "missing GAPS1 magic");
    }
    std::size_t pos = kCheckpointMagic.size();
    const auto version = get<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion) {
        throw Error(Errc::VersionMismatch, "checkpoint version " + std::to_string(version) + ", supported " +
                                               std::to_string(kCheckpointVersion));
    }
    const auto len = get<std::uint64_t>(bytes, pos);
    if (len > bytes.size() - pos) throw Error(Errc::CorruptTensor, "checkpoint truncated in header");
    ParsedCheckpoint pc;
    try {
        pc.header = json::parse(bytes.substr(pos, len));
    } catch (const json::exception& e) {
        throw Error(Errc::CorruptTensor, std::string("header: ") + e.what());
    }
    pc.data_start = pos + len;
    return pc;
}

ModelState restore(const std::string& bytes, const std::optional<ModelConfig>& expected) {
    const ParsedCheckpoint pc = parse_header(bytes);
    const json& h = pc.header;
    try {
        DslRegistry registry = DslRegistry::from_json(h.at("registry"));
        TextVocab vocab = TextVocab::from_words(h.at("vocabulary").get<std::vector<std::string>>());
        const ModelConfig stored = ModelConfig::from_json(h.at("config"));
        if (expected) {
            ModelState probe(registry, vocab, *expected);
            for (const auto& t : h.at("tensors")) {
                const auto name = t.at("name").get<std::string>();
                const auto rows = t.at("rows").get<std::size_t>();
                const auto cols = t.at("cols").get<std::size_t>();
                if (!probe.params().contains(name)) {
                    throw Error(Errc::ShapeMismatch, "tensor '" + name + "' does not exist in the expected config");
                }
                const auto& p = probe.params().get(name);
                if (p.rows != rows || p.cols != cols) {
                    throw Error(Errc::ShapeMismatch, "tensor '" + name + "': checkpoint " + std::to_string(rows) +
                                                         "x" + std::to_string(cols) + ", expected " +
                                                         std::to_string(p.rows) + "x" + std::to_string(p.cols) +
                                                         " (checkpoint hidden " + std::to_string(stored.hidden) +
                                                         ", expected " + std::to_string(expected->hidden) + ")");
                }
            }
        }
        ModelState state(std::move(registry), std::move(vocab), stored);
        const auto& tensors = h.at("tensors");
        if (tensors.size() != state.params().size()) {
            throw Error(Errc::CorruptTensor, "tensor count " + std::to_string(tensors.size()) + " differs from " +
                                                 std::to_string(state.params().size()));
        }
        std::set<std::string> seen;
        std::uint64_t total = 0;
        for (const auto& t : tensors) {
            const auto name = t.at("name").get<std::string>();
            if (!seen.insert(name).second) throw Error(Errc::CorruptTensor, "duplicate tensor '" + name + "'");
            if (!state.params().contains(name)) throw Error(Errc::CorruptTensor, "unknown tensor '" + name + "'");
            auto& p = state.params().get(name);
            if (p.rows != t.at("rows").get<std::size_t>() || p.cols != t.at("cols").get<std::size_t>()) {
                throw Error(Errc::CorruptTensor, "tensor '" + name + "' shape disagrees with config");
            }
            const auto off = t.at("offset").get<std::uint64_t>();
            const std::uint64_t len = p.size() * sizeof(float);
            if (pc.data_start + off + len > bytes.size()) {
                throw Error(Errc::CorruptTensor, "tensor '" + name + "' truncated");
            }
            for (std::size_t i = 0; i < p.size(); ++i) {
                float f;
                std::memcpy(&f, bytes.data() + pc.data_start + off + i * sizeof(float), sizeof(float));
                p.value[i] = f;
            }
            total += len;
        }
        if (pc.data_start + total != bytes.size()) {
            throw Error(Errc::CorruptTensor, "checkpoint has " + std::to_string(bytes.size() - pc.data_start) +
                                                 " data bytes, header describes " + std::to_string(total));
        }
        return state;
    } catch (const json::exception& e) {
        throw Error(Errc::CorruptTensor, std::string("header: ") + e.what());
    }
}

}  // namespace

ModelState checkpoint_from_bytes(const std::string& bytes) { return restore(bytes, std::nullopt); }

void save_checkpoint(const ModelState& state, const fs::path& path) { write_file(path, checkpoint_bytes(state)); }

ModelState load_checkpoint(const fs::path& path) { return restore(read_file(path), std::nullopt); }

ModelState load_checkpoint(const fs::path& path, const ModelConfig& expected) {
    return restore(read_file(path), expected);
}

}  // namespace geoprog
