#pragma once

// Fine-tuning of the identity projector on frozen backbone features with metric-learning
// losses, multi-similarity mining and the clique meta-miner.

#include "comicreid/codec.hpp"
#include "comicreid/features.hpp"
#include "comicreid/losses.hpp"
#include "comicreid/mining.hpp"
#include "comicreid/projector.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace comicreid {

enum class LossKind { Contrastive, TripletMargin, MultiSimilarity, TupletPlusIntraPair };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct LossConfig {
    LossKind kind = LossKind::TripletMargin;
    double triplet_margin = 0.2;
    double contrastive_margin = 0.5;
    MultiSimilarityParams multi_similarity;
    TupletMarginParams tuplet;
    IntraPairVarianceParams intra_pair;
    double weight_tuplet = 1.0;
    double weight_intra_pair = 0.5;

    void validate() const;
};

/// Loss over mined pairs. Returns nullopt when the pairs give the loss nothing to work on
/// (no triplets, or no pairs at all).
std::optional<LossResult<double>> compute_loss(const MatrixXd& emb, const PairSets& pairs, const LossConfig& cfg);

enum class OptimizerKind { AdamW, Sgd };

struct FinetuneConfig {
    ProjectorConfig projector; // input_dim is taken from the features when 0
    LossConfig loss;
    MinerConfig miner;
    int epochs = 20;
    int patience = 3;
    int series_per_batch = 16;
    int instances_per_identity = 8;
    double lr = 7.5e-4;
    double gamma = 0.95;
    double weight_decay = 0.05;
    double grad_clip = 0.5;
    OptimizerKind optimizer = OptimizerKind::AdamW;
    double momentum = 0.0; // sgd only
    std::uint64_t seed = 0;

    void validate() const;
};

Json finetune_config_to_json(const FinetuneConfig& cfg);
/// Unknown keys are rejected.
FinetuneConfig finetune_config_from_json(const Json& j);

struct FinetuneEpoch {
    int epoch = 0;
    double loss = 0.0;       // mean over the epoch's optimisation steps
    double val_map_at_r = 0.0;
    int steps = 0;
};

struct FinetuneResult {
    Projector<double> projector; // best validation epoch, or the initial projector
    std::vector<FinetuneEpoch> history;
    double initial_val_map_at_r = 0.0;
    int best_epoch = 0; // 0 = initialisation
};

/// MAP@R of the validation sequences: global protocol when it yields queries, local otherwise.
double validation_map_at_r(const std::vector<PanelSequence>& val, const FeatureTable& features,
                           const Projector<double>& projector);

/// One training batch: rows with their identity class and series, drawn from up to
/// series_per_batch series, one compatible identity group per series.
struct TrainBatch {
    std::vector<std::string> uuids;
    std::vector<BatchItem> items;
};

/// Batches of one epoch. Every series contributes each of its maximal dissimilarity cliques
/// once per epoch; a batch holds at most one clique per series.
std::vector<TrainBatch> epoch_batches(const IdentityGraph& graph, const FeatureTable& features,
                                      const FinetuneConfig& cfg, Rng& rng);

FinetuneResult finetune(const std::vector<PanelSequence>& train, const std::vector<PanelSequence>& val,
                        const FeatureTable& features, const FinetuneConfig& cfg);

std::string finetune_history_csv(const std::vector<FinetuneEpoch>& history);

void save_projector(const Projector<double>& projector, const std::filesystem::path& path);
Projector<double> load_projector(const std::filesystem::path& path);

} // namespace comicreid
