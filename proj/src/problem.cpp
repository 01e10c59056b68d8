#include "geoprog/problem.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <utility>

#include "geoprog/error.hpp"

namespace geoprog {

namespace {

constexpr std::array<std::pair<std::string_view, std::string_view>, 4> kGlyphs{{
    {"△", "triangle"},  // △
    {"∠", "angle"},     // ∠
    {"⊙", "circle"},    // ⊙
    {"∥", "parallel"},  // ∥
}};

constexpr std::array<std::string_view, 8> kTerminology{
    "triangle", "angle", "circle", "parallel", "line", "segment", "arc", "quadrilateral",
};

constexpr std::size_t kMaxPoints = 4;

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool all_upper(std::string_view s) { return !s.empty() && std::all_of(s.begin(), s.end(), is_upper); }

std::optional<double> parse_number(std::string_view s) {
    if (s.empty() || !is_digit(s.front()) || !is_digit(s.back())) return std::nullopt;
    int dots = 0;
    for (char c : s) {
        if (c == '.') {
            ++dots;
        } else if (!is_digit(c)) {
            return std::nullopt;
        }
    }
    if (dots > 1) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// Glyphs become terminology words; the point letters glued to a glyph are split.
std::string rewrite_glyphs(std::string_view text) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        for (const auto& [glyph, word] : kGlyphs) {
            if (text.substr(i, glyph.size()) == glyph) {
                out += ' ';
                out += word;
                out += ' ';
                i += glyph.size();
                std::size_t j = i;
                while (j < text.size() && is_upper(text[j])) ++j;
                if (j - i <= kMaxPoints) {
                    for (std::size_t k = i; k < j; ++k) {
                        out += text[k];
                        out += ' ';
                    }
                    i = j;
                }
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (text.substr(i, 2) == "°") {  // °
            out += " degrees ";
            i += 2;
            continue;
        }
        out += text[i++];
    }
    return out;
}

bool is_punct(char c) {
    switch (c) {
        case ',':
        case ';':
        case ':':
        case '?':
        case '!':
        case '(':
        case ')':
        case '=':
        case '+':
        case '*':
        case '/':
            return true;
        default:
            return false;
    }
}

std::vector<std::string> split_chunk(std::string_view chunk) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&]() {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i < chunk.size(); ++i) {
        const char c = chunk[i];
        const bool decimal_point = c == '.' && !cur.empty() && is_digit(cur.back()) && i + 1 < chunk.size() &&
                                   is_digit(chunk[i + 1]);
        if (is_punct(c) || (c == '.' && !decimal_point)) {
            flush();
            out.emplace_back(1, c);
        } else {
            cur += c;
        }
    }
    flush();
    return out;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

bool is_terminology_word(std::string_view word) {
    return std::find(kTerminology.begin(), kTerminology.end(), word) != kTerminology.end();
}

std::vector<double> PreprocessedProblem::number_values() const {
    std::vector<double> v;
    v.reserve(numbers.size());
    for (const auto& n : numbers) v.push_back(n.value);
    return v;
}

PreprocessedProblem preprocess(std::string_view raw_text, std::vector<std::vector<double>> raw_patches) {
    PreprocessedProblem p;
    // A previously appended suffix is not re-detected.
    if (auto sep = raw_text.find(kSepToken); sep != std::string_view::npos) {
        raw_text = raw_text.substr(0, sep);
    }
    const std::string text = rewrite_glyphs(raw_text);

    std::vector<std::string> chunks;
    {
        std::string cur;
        for (char c : text) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!cur.empty()) chunks.push_back(std::move(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) chunks.push_back(std::move(cur));
    }
    for (const auto& chunk : chunks) {
        for (auto& tok : split_chunk(chunk)) {
            if (parse_number(tok) || (tok.size() == 1 && is_upper(tok[0]))) {
                p.tokens.push_back(std::move(tok));
            } else if (all_upper(tok) && tok.size() <= kMaxPoints && !p.tokens.empty() &&
                       is_terminology_word(p.tokens.back())) {
                for (char c : tok) p.tokens.emplace_back(1, c);
            } else {
                p.tokens.push_back(lower(std::move(tok)));
            }
        }
    }
    p.main_len = p.tokens.size();

    for (std::size_t i = 0; i < p.main_len; ++i) {
        if (auto v = parse_number(p.tokens[i])) p.numbers.push_back({i, *v});
    }

    std::vector<std::vector<std::string>> phrases;
    for (std::size_t i = 0; i < p.main_len; ++i) {
        if (!is_terminology_word(p.tokens[i])) continue;
        std::size_t j = i + 1;
        while (j < p.main_len && j - i - 1 < kMaxPoints && p.tokens[j].size() == 1 && is_upper(p.tokens[j][0])) ++j;
        if (j == i + 1) continue;
        std::vector<std::string> phrase(p.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                        p.tokens.begin() + static_cast<std::ptrdiff_t>(j));
        if (std::find(phrases.begin(), phrases.end(), phrase) == phrases.end()) {
            phrases.push_back(std::move(phrase));
        }
        i = j - 1;
    }
    if (!phrases.empty()) {
        p.tokens.emplace_back(kSepToken);
        for (const auto& phrase : phrases) {
            const std::size_t start = p.tokens.size();
            p.tokens.insert(p.tokens.end(), phrase.begin(), phrase.end());
            p.elements.push_back({start, p.tokens.size()});
        }
    }

    if (!raw_patches.empty()) {
        const std::size_t dim = raw_patches.front().size();
        for (const auto& patch : raw_patches) {
            if (patch.size() != dim || dim == 0) {
                throw Error(Errc::PatchDimensionMismatch, "patch vectors of unequal or zero dimension");
            }
        }
    }
    p.patches = std::move(raw_patches);
    return p;
}

std::vector<DynamicSymbol> dynamic_symbols(const PreprocessedProblem& problem) {
    std::vector<DynamicSymbol> out;
    for (std::size_t i = 0; i < problem.numbers.size(); ++i) {
        out.push_back({"N_" + std::to_string(i), SymbolKind::DynamicNumber, problem.numbers[i].value});
    }
    for (std::size_t i = 0; i < problem.elements.size(); ++i) {
        out.push_back({"E_" + std::to_string(i), SymbolKind::DynamicElement, std::nullopt});
    }
    return out;
}

SymbolMask type_mask(const DslRegistry& registry, TypeId t, const PreprocessedProblem& problem) {
    return type_mask(registry, t, problem.vocabulary(registry));
}

}  // namespace geoprog
