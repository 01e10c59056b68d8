#pragma once

// Line-delimited dataset records, the synthetic problem generator and
// checkpoint persistence. Layouts are described in docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geoprog/model.hpp"
#include "geoprog/problem.hpp"
#include "geoprog/registry.hpp"
#include "json.hpp"

namespace geoprog {

struct DatasetRecord {
    std::string id;
    std::string type;
    std::string text;
    std::vector<std::vector<double>> patches;
    // Nested ([{op, args}]) or flat (token list); null when unlabeled.
    nlohmann::json program;

    nlohmann::json to_json() const;
    // Throws Errc::MalformedRecord (line 0 when unknown).
    static DatasetRecord from_json(const nlohmann::json& j, std::size_t line = 0);
};

// One JSON object per line; blank lines are skipped. Errc::MalformedRecord cites the line.
std::vector<DatasetRecord> read_records(const std::filesystem::path& path);
std::string records_to_jsonl(const std::vector<DatasetRecord>& records);
void write_records(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);

// Preprocesses a record and, when it carries a program, parses and validates
// it. Unknown surfaces raise Errc::UnresolvableSymbol naming the record.
PreprocessedProblem to_problem(const DatasetRecord& record, const DslRegistry& registry);
std::vector<PreprocessedProblem> load_dataset(const std::filesystem::path& path, const DslRegistry& registry);

struct SynthProfile {
    double cal_fraction = 0.5;
    // Sub-program count bounds for prv records (cal lengths come from the templates).
    int prv_min_subs = 1;
    int prv_max_subs = 4;
    std::size_t patch_count = 4;
    std::size_t patch_dim = 16;
};

// Deterministic in (n, seed, registry, profile). The registry must define the
// cal and prv types with the default operator inventory.
std::vector<DatasetRecord> synth_generate(std::size_t n, std::uint64_t seed, const DslRegistry& registry,
                                          const SynthProfile& profile = {});

inline constexpr std::string_view kCheckpointMagic = "GAPS1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string checkpoint_bytes(const ModelState& state);
// Throws Errc::CorruptTensor / Errc::VersionMismatch.
ModelState checkpoint_from_bytes(const std::string& bytes);
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);
// Also requires every tensor shape to match `expected`; Errc::ShapeMismatch otherwise.
ModelState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace geoprog
