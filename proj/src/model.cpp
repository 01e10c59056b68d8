#include "geoprog/model.hpp"

#include <cmath>
#include <random>

#include "geoprog/error.hpp"

namespace geoprog {

std::string_view to_string(CacheStrategy s) {
    switch (s) {
        case CacheStrategy::LastOperandQuery: return "last_operand_query";
        case CacheStrategy::OperatorQuery: return "operator_query";
        case CacheStrategy::OperatorEmbedding: return "operator_embedding";
    }
    return "last_operand_query";
}

CacheStrategy parse_cache_strategy(std::string_view s) {
    if (s == "last_operand_query") return CacheStrategy::LastOperandQuery;
    if (s == "operator_query") return CacheStrategy::OperatorQuery;
    if (s == "operator_embedding") return CacheStrategy::OperatorEmbedding;
    throw Error(Errc::InvalidConfig, "unknown cache strategy '" + std::string(s) + "'");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"hidden", hidden},
            {"layers", layers},
            {"patch_dim", patch_dim},
            {"cache_strategy", std::string(to_string(cache_strategy))}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.patch_dim = j.value("patch_dim", c.patch_dim);
    c.cache_strategy = parse_cache_strategy(j.value("cache_strategy", std::string("last_operand_query")));
    return c;
}

TextVocab::TextVocab() {
    add(std::string(kUnk));
    add(std::string(kNum));
    add(std::string(kSepToken));
}

void TextVocab::add(const std::string& w) {
    if (index_.count(w) != 0) return;
    index_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(w);
}

TextVocab TextVocab::build(const std::vector<PreprocessedProblem>& corpus) {
    TextVocab v;
    for (const auto& p : corpus) {
        std::size_t next_number = 0;
        for (std::size_t i = 0; i < p.tokens.size(); ++i) {
            if (next_number < p.numbers.size() && p.numbers[next_number].token == i) {
                ++next_number;
                continue;
            }
            v.add(p.tokens[i]);
        }
    }
    return v;
}

TextVocab TextVocab::from_words(std::vector<std::string> words) {
    TextVocab v;
    v.words_.clear();
    v.index_.clear();
    for (const auto& w : words) v.add(w);
    if (v.index_.count(std::string(kUnk)) == 0 || v.index_.count(std::string(kNum)) == 0) {
        throw Error(Errc::CorruptTensor, "vocabulary lacks <unk> or <num>");
    }
    return v;
}

int TextVocab::index(const std::string& token) const {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    return index_.at(std::string(kUnk));
}

ModelState::ModelState(DslRegistry registry, TextVocab vocab, ModelConfig config)
    : registry_(std::move(registry)), vocab_(std::move(vocab)), config_(config) {
    if (config_.hidden < 2 || config_.hidden % 2 != 0) {
        throw Error(Errc::InvalidConfig, "hidden size must be even and >= 2");
    }
    if (config_.layers < 1 || config_.patch_dim < 1) {
        throw Error(Errc::InvalidConfig, "layers and patch_dim must be >= 1");
    }
    declare();
}

std::vector<nn::GruCell> ModelState::encoder_cells() const {
    std::vector<nn::GruCell> cells;
    const std::size_t h = config_.hidden;
    for (std::size_t l = 0; l < config_.layers; ++l) {
        for (const char* dir : {"fw", "bw"}) {
            cells.push_back({"enc.l" + std::to_string(l) + "." + dir, h, h / 2});
        }
    }
    return cells;
}

nn::GruCell ModelState::operator_cell() const { return {"gen.op_cell", config_.hidden, config_.hidden}; }
nn::GruCell ModelState::operand_cell() const { return {"gen.oe_cell", config_.hidden, config_.hidden}; }

void ModelState::declare() {
    const std::size_t h = config_.hidden;
    params_.add("enc.tok_emb", vocab_.size(), h);
    params_.add("enc.patch_proj", h, config_.patch_dim);
    params_.add("enc.patch_bias", 1, h);
    for (const auto& cell : encoder_cells()) cell.declare(params_);
    params_.add("cls.w1", registry_.type_count(), h);
    params_.add("gen.w2", h, 2 * h);
    params_.add("gen.w3", h, h);
    params_.add("gen.w4", h, h);
    params_.add("gen.w5", h, h);
    params_.add("gen.wv", h, h);
    operator_cell().declare(params_);
    operand_cell().declare(params_);
    params_.add("gen.sym_emb", registry_.static_size(), h);
}

ModelState ModelState::create(DslRegistry registry, TextVocab vocab, ModelConfig config, std::uint64_t seed) {
    ModelState m(std::move(registry), std::move(vocab), config);
    std::mt19937_64 rng(seed);
    for (auto& [name, p] : m.params_) {
        const bool is_bias = name.ends_with(".b") || name.ends_with("_bias");
        if (is_bias) continue;
        const double bound = 1.0 / std::sqrt(static_cast<double>(p.cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : p.value) v = dist(rng);
    }
    m.round_to_storage();
    return m;
}

nn::Var ModelState::bind(nn::Tape& tape, const std::string& name, Grad grad) const {
    // Grad::Off nodes never receive gradient writes, so the const_cast is read-only in effect.
    auto& p = const_cast<nn::Parameter&>(params_.get(name));
    return grad == Grad::On ? tape.param(p) : tape.frozen_param(p);
}

nn::GruVars ModelState::bind(nn::Tape& tape, const nn::GruCell& cell, Grad grad) const {
    nn::GruVars v;
    v.wx = bind(tape, cell.prefix + ".wx", grad);
    v.wh_gates = bind(tape, cell.prefix + ".wh_gates", grad);
    v.wh_cand = bind(tape, cell.prefix + ".wh_cand", grad);
    v.bias = bind(tape, cell.prefix + ".b", grad);
    v.hidden = cell.hidden;
    return v;
}

void ModelState::round_to_storage() {
    for (auto& [_, p] : params_) {
        for (double& v : p.value) v = static_cast<double>(static_cast<float>(v));
    }
}

}  // namespace geoprog
