#pragma once

// Joint objective (type + operator + operand negative log-likelihood),
// teacher-forcing schedule, Adam optimization and top-k evaluation.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geoprog/beam.hpp"
#include "geoprog/model.hpp"
#include "geoprog/problem.hpp"
#include "json.hpp"

namespace geoprog {

// Step function: the probability of the first entry whose threshold exceeds
// the epoch; epochs past the table use the last entry.
struct TfSchedule {
    std::vector<std::pair<int, double>> table{{10, 0.0}, {20, 0.1}, {30, 0.5}, {40, 0.8}, {100, 0.9}};
};

double tf_prob(int epoch, const TfSchedule& schedule);

struct TrainConfig {
    ModelConfig model;
    double lr = 2e-4;
    int epochs = 300;
    std::size_t batch_size = 40;
    std::uint64_t seed = 0;
    TfSchedule schedule;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 5.0;
    BeamConfig beam;

    // Throws Errc::InvalidConfig.
    void validate() const;
    nlohmann::json to_json() const;
    // Missing keys keep their defaults.
    static TrainConfig from_json(const nlohmann::json& j);
};

struct LossParts {
    double total = 0.0;
    double type_loss = 0.0;
    double op_loss = 0.0;
    double oe_loss = 0.0;
};

// Builds one example's loss on the tape (gold type drives the mask). Fed
// symbols are gold with probability tf, else the model's argmax.
nn::Var example_loss(nn::Tape& tape, const ModelState& state, const PreprocessedProblem& problem, double tf,
                     std::mt19937_64& rng, LossParts* parts = nullptr, Grad grad = Grad::On);

// Batch-averaged loss. With accumulate_grad the parameter gradients receive
// the gradient of the batch average (existing gradients are kept).
LossParts loss(ModelState& state, std::span<const PreprocessedProblem* const> batch, double tf,
               std::mt19937_64& rng, bool accumulate_grad = false);

struct EpochLog {
    int epoch = 0;
    LossParts mean;
};

// Adam moments and step counter.
class Adam {
   public:
    Adam(const nn::ParameterSet& params, double lr, double beta1, double beta2, double eps);
    // Clips the global gradient norm to clip_norm, then applies one update.
    // Returns the pre-clip norm.
    double step(nn::ParameterSet& params, double clip_norm);

   private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

// Trains a fresh model. Throws Errc::NonFiniteLoss when a batch loss is not finite.
ModelState train(const TrainConfig& cfg, const DslRegistry& registry, const std::vector<PreprocessedProblem>& data,
                 const std::function<void(const EpochLog&)>& on_epoch = {});

// Continues training an existing state for cfg.epochs epochs.
void train_state(ModelState& state, const TrainConfig& cfg, const std::vector<PreprocessedProblem>& data,
                 const std::function<void(const EpochLog&)>& on_epoch = {});

enum class ErrorKind { WrongOperator, WrongOperand };

// Kind of the first position where the prediction leaves the gold program.
// Returns nullopt when the sub-program lists are identical.
std::optional<ErrorKind> first_divergence(const SurfaceProgram& predicted, const SurfaceProgram& gold);

struct TopKReport {
    std::size_t total = 0;
    std::size_t k = 0;
    double top1 = 0.0;
    double topk = 0.0;
    double type_accuracy = 0.0;
    // type name → {count, top1, topk}
    struct PerType {
        std::size_t count = 0;
        double top1 = 0.0;
        double topk = 0.0;
    };
    std::map<std::string, PerType> per_type;
    // rank of the gold program among candidates → count; -1 = not found.
    std::map<int, std::size_t> rank_histogram;
    std::size_t wrong_operator = 0;
    std::size_t wrong_operand = 0;

    nlohmann::json to_json() const;
};

// Inference-time type from the classifier. Read-only over state.
TopKReport evaluate(const ModelState& state, const std::vector<PreprocessedProblem>& data, std::size_t k,
                    const BeamConfig& beam);

}  // namespace geoprog
