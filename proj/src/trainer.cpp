#include "comicreid/trainer.hpp"

#include "comicreid/evaluation.hpp"
#include "comicreid/optim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace comicreid {

namespace {

constexpr int kProjectorVersion = 1;

} // namespace

std::string to_string(LossKind k)
{
    switch (k) {
    case LossKind::Contrastive:
        return "contrastive";
    case LossKind::TripletMargin:
        return "triplet_margin";
    case LossKind::MultiSimilarity:
        return "multi_similarity";
    case LossKind::TupletPlusIntraPair:
        return "tuplet_plus_intrapair";
    }
    return "triplet_margin";
}

LossKind loss_kind_from_string(const std::string& s)
{
    for (auto k : {LossKind::Contrastive, LossKind::TripletMargin, LossKind::MultiSimilarity, LossKind::TupletPlusIntraPair})
        if (to_string(k) == s)
            return k;
    throw std::invalid_argument("unknown loss: " + s);
}

void LossConfig::validate() const
{
    if (triplet_margin < 0 || contrastive_margin < 0)
        throw std::invalid_argument("margins must be non-negative");
    if (!(multi_similarity.alpha > 0 && multi_similarity.beta > 0))
        throw std::invalid_argument("multi-similarity alpha and beta must be positive");
    if (tuplet.scale <= 0 || weight_tuplet < 0 || weight_intra_pair < 0)
        throw std::invalid_argument("tuplet scale must be positive and loss weights non-negative");
}

std::optional<LossResult<double>> compute_loss(const MatrixXd& emb, const PairSets& pairs, const LossConfig& cfg)
{
    switch (cfg.kind) {
    case LossKind::Contrastive: {
        std::vector<LabeledPair> labeled;
        for (const auto& p : pairs.positive)
            labeled.push_back({p.a, p.b, 0});
        for (const auto& p : pairs.negative)
            labeled.push_back({p.a, p.b, 1});
        if (labeled.empty())
            return std::nullopt;
        return contrastive_loss<double>(emb, labeled, cfg.contrastive_margin);
    }
    case LossKind::TripletMargin: {
        const auto triplets = pairs_to_triplets(pairs);
        if (triplets.empty())
            return std::nullopt;
        return triplet_margin_loss<double>(emb, triplets, cfg.triplet_margin);
    }
    case LossKind::MultiSimilarity:
        if (pairs.positive.empty() && pairs.negative.empty())
            return std::nullopt;
        return multi_similarity_loss<double>(emb, pairs, cfg.multi_similarity);
    case LossKind::TupletPlusIntraPair:
        if (pairs.positive.empty())
            return std::nullopt;
        return tuplet_plus_intrapair_loss<double>(emb, pairs, cfg.weight_tuplet, cfg.weight_intra_pair, cfg.tuplet,
                                                  cfg.intra_pair);
    }
    return std::nullopt;
}

void FinetuneConfig::validate() const
{
    loss.validate();
    if (projector.output_dim <= 0)
        throw std::invalid_argument("projector output dimension must be positive");
    if (!(projector.random_mask_rate >= 0 && projector.random_mask_rate < 1))
        throw std::invalid_argument("random mask rate must be in [0, 1)");
    if (miner.base == BaseMiner::MultiSimilarity && !(miner.epsilon > 0))
        throw std::invalid_argument("multi-similarity miner epsilon must be positive");
    if (epochs < 0 || epochs > 20)
        throw std::invalid_argument("fine-tuning runs between 0 and 20 epochs");
    if (patience < 1 || series_per_batch < 1 || instances_per_identity < 2)
        throw std::invalid_argument("patience and series per batch must be positive, two or more instances per identity");
    if (lr < 0 || gamma <= 0 || weight_decay < 0 || grad_clip < 0 || momentum < 0 || momentum >= 1)
        throw std::invalid_argument("invalid optimiser settings");
}

Json finetune_config_to_json(const FinetuneConfig& c)
{
    return Json{{"output_dim", c.projector.output_dim},
                {"fusion", to_string(c.projector.fusion)},
                {"padding", to_string(c.projector.padding)},
                {"random_mask_rate", c.projector.random_mask_rate},
                {"loss", to_string(c.loss.kind)},
                {"triplet_margin", c.loss.triplet_margin},
                {"contrastive_margin", c.loss.contrastive_margin},
                {"ms_alpha", c.loss.multi_similarity.alpha},
                {"ms_beta", c.loss.multi_similarity.beta},
                {"ms_base", c.loss.multi_similarity.base},
                {"tuplet_margin_degrees", c.loss.tuplet.margin_degrees},
                {"tuplet_scale", c.loss.tuplet.scale},
                {"ipv_pos_eps", c.loss.intra_pair.pos_eps},
                {"ipv_neg_eps", c.loss.intra_pair.neg_eps},
                {"weight_tuplet", c.loss.weight_tuplet},
                {"weight_intra_pair", c.loss.weight_intra_pair},
                {"miner", to_string(c.miner.base)},
                {"miner_epsilon", c.miner.epsilon},
                {"meta_mining", c.miner.meta_mining},
                {"mix_series", c.miner.mix_series},
                {"neighbourhood", c.miner.neighbourhood},
                {"epochs", c.epochs},
                {"patience", c.patience},
                {"series_per_batch", c.series_per_batch},
                {"instances_per_identity", c.instances_per_identity},
                {"lr", c.lr},
                {"gamma", c.gamma},
                {"weight_decay", c.weight_decay},
                {"grad_clip", c.grad_clip},
                {"optimizer", c.optimizer == OptimizerKind::AdamW ? "adamw" : "sgd"},
                {"momentum", c.momentum},
                {"seed", c.seed}};
}

FinetuneConfig finetune_config_from_json(const Json& j)
{
    FinetuneConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "output_dim") c.projector.output_dim = v.get<Index>();
        else if (key == "fusion") c.projector.fusion = fusion_from_string(v.get<std::string>());
        else if (key == "padding") c.projector.padding = padding_from_string(v.get<std::string>());
        else if (key == "random_mask_rate") c.projector.random_mask_rate = v.get<double>();
        else if (key == "loss") c.loss.kind = loss_kind_from_string(v.get<std::string>());
        else if (key == "triplet_margin") c.loss.triplet_margin = v.get<double>();
        else if (key == "contrastive_margin") c.loss.contrastive_margin = v.get<double>();
        else if (key == "ms_alpha") c.loss.multi_similarity.alpha = v.get<double>();
        else if (key == "ms_beta") c.loss.multi_similarity.beta = v.get<double>();
        else if (key == "ms_base") c.loss.multi_similarity.base = v.get<double>();
        else if (key == "tuplet_margin_degrees") c.loss.tuplet.margin_degrees = v.get<double>();
        else if (key == "tuplet_scale") c.loss.tuplet.scale = v.get<double>();
        else if (key == "ipv_pos_eps") c.loss.intra_pair.pos_eps = v.get<double>();
        else if (key == "ipv_neg_eps") c.loss.intra_pair.neg_eps = v.get<double>();
        else if (key == "weight_tuplet") c.loss.weight_tuplet = v.get<double>();
        else if (key == "weight_intra_pair") c.loss.weight_intra_pair = v.get<double>();
        else if (key == "miner") c.miner.base = base_miner_from_string(v.get<std::string>());
        else if (key == "miner_epsilon") c.miner.epsilon = v.get<double>();
        else if (key == "meta_mining") c.miner.meta_mining = v.get<bool>();
        else if (key == "mix_series") c.miner.mix_series = v.get<bool>();
        else if (key == "neighbourhood") c.miner.neighbourhood = v.get<bool>();
        else if (key == "epochs") c.epochs = v.get<int>();
        else if (key == "patience") c.patience = v.get<int>();
        else if (key == "series_per_batch") c.series_per_batch = v.get<int>();
        else if (key == "instances_per_identity") c.instances_per_identity = v.get<int>();
        else if (key == "lr") c.lr = v.get<double>();
        else if (key == "gamma") c.gamma = v.get<double>();
        else if (key == "weight_decay") c.weight_decay = v.get<double>();
        else if (key == "grad_clip") c.grad_clip = v.get<double>();
        else if (key == "optimizer") {
            const auto s = v.get<std::string>();
            if (s != "adamw" && s != "sgd")
                throw std::invalid_argument("unknown optimizer: " + s);
            c.optimizer = s == "adamw" ? OptimizerKind::AdamW : OptimizerKind::Sgd;
        }
        else if (key == "momentum") c.momentum = v.get<double>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else throw std::invalid_argument("unknown fine-tuning config key: " + key);
    }
    c.validate();
    return c;
}

double validation_map_at_r(const std::vector<PanelSequence>& val, const FeatureTable& features,
                           const Projector<double>& projector)
{
    const auto emb = embed_instances(features, projector);
    const auto cur = curate_global(val);
    if (!cur.queries.empty())
        return global_eval(cur, emb).map_at_r;
    return local_eval(val, emb).map_at_r;
}

std::vector<TrainBatch> epoch_batches(const IdentityGraph& graph, const FeatureTable& features,
                                      const FinetuneConfig& cfg, Rng& rng)
{
    // usable instances per node, cliques per series
    std::vector<std::vector<std::string>> usable(graph.size());
    for (std::size_t n = 0; n < graph.size(); ++n)
        for (const auto& uuid : graph.node(n).instance_uuids)
            if (features.count(uuid))
                usable[n].push_back(uuid);
    std::map<std::string, std::vector<std::size_t>> nodes_of_series;
    for (std::size_t n = 0; n < graph.size(); ++n)
        if (!usable[n].empty())
            nodes_of_series[graph.node(n).series_id].push_back(n);

    std::vector<std::pair<std::string, std::vector<std::vector<std::size_t>>>> units;
    for (const auto& [series, nodes] : nodes_of_series) {
        auto cliques = mining_groups(graph.induced(nodes), cfg.miner.neighbourhood);
        for (auto& c : cliques)
            for (auto& l : c)
                l = nodes[l];
        std::shuffle(cliques.begin(), cliques.end(), rng);
        units.emplace_back(series, std::move(cliques));
    }

    std::vector<TrainBatch> out;
    std::vector<std::size_t> cursor(units.size(), 0);
    for (;;) {
        std::vector<std::size_t> open;
        for (std::size_t s = 0; s < units.size(); ++s)
            if (cursor[s] < units[s].second.size())
                open.push_back(s);
        if (open.empty())
            break;
        std::shuffle(open.begin(), open.end(), rng);
        for (std::size_t start = 0; start < open.size(); start += static_cast<std::size_t>(cfg.series_per_batch)) {
            TrainBatch batch;
            const std::size_t stop = std::min(open.size(), start + static_cast<std::size_t>(cfg.series_per_batch));
            for (std::size_t k = start; k < stop; ++k) {
                const auto s = open[k];
                for (auto node : units[s].second[cursor[s]]) {
                    auto pool = usable[node];
                    std::shuffle(pool.begin(), pool.end(), rng);
                    pool.resize(std::min(pool.size(), static_cast<std::size_t>(cfg.instances_per_identity)));
                    std::sort(pool.begin(), pool.end());
                    for (auto& uuid : pool) {
                        batch.uuids.push_back(uuid);
                        batch.items.push_back({node, units[s].first});
                    }
                }
                ++cursor[s];
            }
            out.push_back(std::move(batch));
        }
    }
    return out;
}

FinetuneResult finetune(const std::vector<PanelSequence>& train, const std::vector<PanelSequence>& val,
                        const FeatureTable& features, const FinetuneConfig& cfg_in)
{
    FinetuneConfig cfg = cfg_in;
    if (cfg.projector.input_dim == 0)
        cfg.projector.input_dim = feature_dim(features);
    cfg.validate();

    const auto graph = link_sequences(train);
    bool has_positive = false;
    for (const auto& node : graph.nodes()) {
        std::size_t n = 0;
        for (const auto& uuid : node.instance_uuids)
            n += features.count(uuid);
        has_positive = has_positive || n >= 2;
    }
    if (!has_positive)
        throw DataError("the training split has no annotated positive pairs");

    Rng rng(cfg.seed);
    FinetuneResult res{Projector<double>(cfg.projector), {}, 0.0, 0};
    res.projector.initialize(rng);
    const bool validate = !val.empty();
    res.initial_val_map_at_r = validate ? validation_map_at_r(val, features, res.projector) : 0.0;

    VectorXd params = res.projector.parameters();
    VectorXd best = params;
    double best_score = res.initial_val_map_at_r;
    int since_best = 0;
    AdamWConfig adam;
    adam.weight_decay = cfg.weight_decay;
    AdamW<double> adamw(params.size(), adam);
    DecoupledSgd<double> sgd(params.size(), cfg.momentum, cfg.weight_decay);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = exponential_lr(cfg.lr, cfg.gamma, epoch - 1);
        double loss_sum = 0.0;
        int steps = 0;
        for (const auto& batch : epoch_batches(graph, features, cfg, rng)) {
            if (batch.uuids.size() < 2)
                continue;
            const auto in = make_part_batch(features, batch.uuids);
            Projector<double>::Cache cache;
            const MatrixXd emb = res.projector.forward(in, &cache, &rng);
            const auto pairs = meta_mine<double>(emb, graph, batch.items, cfg.miner);
            const auto loss = compute_loss(emb, pairs, cfg.loss);
            if (!loss)
                continue;
            VectorXd g = res.projector.backward(cache, loss->grad).params;
            if (!std::isfinite(loss->value) || !g.allFinite())
                throw NumericError("fine-tuning diverged in epoch " + std::to_string(epoch) + " (loss " +
                                   std::to_string(loss->value) + ")");
            clip_grad_norm(g, cfg.grad_clip);
            if (cfg.optimizer == OptimizerKind::AdamW)
                adamw.step(params, g, lr);
            else
                sgd.step(params, g, lr);
            if (!params.allFinite())
                throw NumericError("fine-tuning diverged in epoch " + std::to_string(epoch) + ": non-finite parameters");
            res.projector.set_parameters(params);
            loss_sum += loss->value;
            ++steps;
        }
        FinetuneEpoch row;
        row.epoch = epoch;
        row.steps = steps;
        row.loss = steps > 0 ? loss_sum / steps : 0.0;
        row.val_map_at_r = validate ? validation_map_at_r(val, features, res.projector) : 0.0;
        res.history.push_back(row);
        if (!validate)
            continue;
        if (row.val_map_at_r > best_score) {
            best_score = row.val_map_at_r;
            best = params;
            res.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    res.projector.set_parameters(validate ? best : params);
    if (!validate)
        res.best_epoch = static_cast<int>(res.history.size());
    return res;
}

std::string finetune_history_csv(const std::vector<FinetuneEpoch>& history)
{
    std::ostringstream out;
    out << "epoch,loss,val_map_at_r\n";
    char buf[128];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", h.epoch, h.loss, h.val_map_at_r);
        out << buf;
    }
    return out.str();
}

void save_projector(const Projector<double>& projector, const std::filesystem::path& path)
{
    const auto& c = projector.config();
    Json j;
    j["format"] = "comicreid.projector";
    j["version"] = kProjectorVersion;
    j["config"] = {{"input_dim", c.input_dim},
                   {"output_dim", c.output_dim},
                   {"fusion", to_string(c.fusion)},
                   {"padding", to_string(c.padding)},
                   {"random_mask_rate", c.random_mask_rate},
                   {"normalize", c.normalize}};
    Json layers = Json::array({{{"name", "linear.weight"}, {"shape", {c.output_dim, projector.fused_dim()}}},
                               {{"name", "linear.bias"}, {"shape", {c.output_dim}}}});
    if (c.padding == Padding::Trainable) {
        layers.push_back({{"name", "padding.face"}, {"shape", {c.input_dim}}});
        layers.push_back({{"name", "padding.body"}, {"shape", {c.input_dim}}});
    }
    if (c.fusion == Fusion::WeightedSum) {
        layers.push_back({{"name", "fusion.face_logits"}, {"shape", {c.input_dim}}});
        layers.push_back({{"name", "fusion.body_logits"}, {"shape", {c.input_dim}}});
    }
    if (c.fusion == Fusion::CoeffSum)
        layers.push_back({{"name", "fusion.coefficients"}, {"shape", {2}}});
    j["layers"] = layers;
    const VectorXd p = projector.parameters();
    j["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
    write_text_file(path, j.dump() + "\n");
}

Projector<double> load_projector(const std::filesystem::path& path)
{
    const Json j = Json::parse(read_text_file(path));
    if (j.value("format", "") != "comicreid.projector")
        throw DataError(path.string() + " is not a projector checkpoint");
    if (j.at("version").get<int>() != kProjectorVersion)
        throw DataError("unsupported projector checkpoint version in " + path.string());
    const auto& c = j.at("config");
    ProjectorConfig cfg;
    cfg.input_dim = c.at("input_dim").get<Index>();
    cfg.output_dim = c.at("output_dim").get<Index>();
    cfg.fusion = fusion_from_string(c.at("fusion").get<std::string>());
    cfg.padding = padding_from_string(c.at("padding").get<std::string>());
    cfg.random_mask_rate = c.at("random_mask_rate").get<double>();
    cfg.normalize = c.at("normalize").get<bool>();
    Projector<double> proj(cfg);
    const auto p = j.at("parameters").get<std::vector<double>>();
    if (static_cast<Index>(p.size()) != proj.parameter_count())
        throw DataError("projector checkpoint parameter count does not match its layers: " + path.string());
    proj.set_parameters(Eigen::Map<const VectorXd>(p.data(), static_cast<Index>(p.size())));
    return proj;
}

} // namespace comicreid
