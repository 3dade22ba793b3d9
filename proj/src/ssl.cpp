#include "comicreid/ssl.hpp"

#include "comicreid/codec.hpp"
#include "comicreid/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace comicreid {

namespace {

constexpr int kCheckpointVersion = 1;

} // namespace

std::string to_string(SslInput m)
{
    return m == SslInput::Features ? "features" : "pixels";
}

SslInput ssl_input_from_string(const std::string& s)
{
    if (s == "features")
        return SslInput::Features;
    if (s == "pixels")
        return SslInput::Pixels;
    throw std::invalid_argument("unknown ssl input mode: " + s);
}

void SslConfig::validate() const
{
    if (!(temperature > 0))
        throw std::invalid_argument("temperature must be positive");
    if (projection_dim != 128)
        throw std::invalid_argument("projection head output must be 128-dimensional");
    if (encoder_hidden <= 0 || encoder_dim <= 0)
        throw std::invalid_argument("encoder widths must be positive");
    if (lr < 0 || weight_decay < 0 || lr_floor_ratio < 0 || lr_floor_ratio > 1 || grad_clip < 0)
        throw std::invalid_argument("optimizer settings must be non-negative");
    if (batch_size < 2)
        throw std::invalid_argument("a pretraining batch needs at least two instances");
    if (steps < 0)
        throw std::invalid_argument("steps must be non-negative");
    if (strong_noise < 0 || weak_noise < 0 || strong_dropout < 0 || strong_dropout >= 1)
        throw std::invalid_argument("view noise must be non-negative and dropout below 1");
    if (face_size <= 0 || body_size <= 0 || pool_grid <= 0)
        throw std::invalid_argument("image sizes and pooling grid must be positive");
}

std::vector<SslItem> ssl_items_from_features(const FeatureTable& table)
{
    std::vector<SslItem> out;
    for (const auto& [uuid, f] : table)
        out.push_back({uuid, f.face, f.body, std::nullopt, std::nullopt});
    return out;
}

std::vector<SslItem> ssl_items_from_images(const std::map<std::string, ImageBuffer>& faces,
                                           const std::map<std::string, ImageBuffer>& bodies)
{
    std::map<std::string, SslItem> items;
    for (const auto& [uuid, img] : faces) {
        items[uuid].uuid = uuid;
        items[uuid].face_image = img;
    }
    for (const auto& [uuid, img] : bodies) {
        items[uuid].uuid = uuid;
        items[uuid].body_image = img;
    }
    std::vector<SslItem> out;
    for (auto& [uuid, item] : items)
        out.push_back(std::move(item));
    return out;
}

SslModel::SslModel(Index input_dim, const SslConfig& cfg)
    : encoder_({input_dim, cfg.encoder_hidden, cfg.encoder_dim}),
      head_({cfg.encoder_dim, cfg.encoder_dim, cfg.encoder_dim, cfg.projection_dim})
{
}

void SslModel::initialize(Rng& rng)
{
    encoder_.initialize(rng);
    head_.initialize(rng);
}

VectorXd SslModel::parameters() const
{
    VectorXd p(parameter_count());
    p << encoder_.parameters(), head_.parameters();
    return p;
}

void SslModel::set_parameters(const VectorXd& p)
{
    if (p.size() != parameter_count())
        throw std::invalid_argument("SSL parameter vector has the wrong size");
    encoder_.set_parameters(p.head(encoder_.parameter_count()));
    head_.set_parameters(p.tail(head_.parameter_count()));
}

MatrixXd SslModel::project(const MatrixXd& x) const
{
    return head_.forward(encoder_.forward(x));
}

MatrixXd SslModel::backbone(const MatrixXd& x) const
{
    return head_.forward_prefix(encoder_.forward(x), 1);
}

SslModel::Step SslModel::forward(const MatrixXd& x) const
{
    Step s;
    const MatrixXd h = encoder_.forward(x, &s.enc_cache);
    s.z = head_.forward(h, &s.head_cache);
    return s;
}

VectorXd SslModel::backward(const Step& step, const MatrixXd& grad_z) const
{
    const auto gh = head_.backward(step.head_cache, grad_z);
    const auto ge = encoder_.backward(step.enc_cache, gh.input);
    VectorXd g(parameter_count());
    g << ge.params, gh.params;
    return g;
}

namespace {

const ImageBuffer& image_of(const SslItem& item, PartKind part)
{
    const auto& img = part == PartKind::Face ? item.face_image : item.body_image;
    if (!img)
        throw DataError("instance " + item.uuid + " has no " + to_string(part) + " image");
    return *img;
}

const VectorXd& feature_of(const SslItem& item, PartKind part)
{
    const auto& f = part == PartKind::Face ? item.face : item.body;
    if (!f)
        throw DataError("instance " + item.uuid + " has no " + to_string(part) + " feature");
    return *f;
}

AugmentConfig part_augment(const SslConfig& cfg, PartKind part, bool strong)
{
    AugmentConfig a;
    a.target_size = part == PartKind::Face ? cfg.face_size : cfg.body_size;
    a.min_scale = strong ? 0.08 : (part == PartKind::Face ? 0.2 : 0.5);
    return a;
}

VectorXd strong_view(const SslItem& item, PartKind part, const SslConfig& cfg, Rng& rng)
{
    if (cfg.input == SslInput::Pixels)
        return pool_grid(strong_augment(image_of(item, part), part_augment(cfg, part, true), rng), cfg.pool_grid);
    const VectorXd& f = feature_of(item, part);
    std::normal_distribution<double> noise(0.0, cfg.strong_noise);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VectorXd v(f.size());
    for (Index k = 0; k < f.size(); ++k)
        v(k) = u(rng) < cfg.strong_dropout ? 0.0 : f(k) + noise(rng);
    return v;
}

VectorXd weak_view(const SslItem& item, PartKind part, const SslConfig& cfg, Rng& rng)
{
    if (cfg.input == SslInput::Pixels)
        return pool_grid(weak_augment(image_of(item, part), part_augment(cfg, part, false), rng), cfg.pool_grid);
    const VectorXd& f = feature_of(item, part);
    std::normal_distribution<double> noise(0.0, cfg.weak_noise);
    VectorXd v(f.size());
    for (Index k = 0; k < f.size(); ++k)
        v(k) = f(k) + noise(rng);
    return v;
}

/// Sequential sampler over a reshuffled permutation.
class Sampler {
public:
    Sampler(std::vector<std::size_t> pool, Rng& rng) : pool_(std::move(pool)), rng_(rng) { refill(); }

    std::size_t next()
    {
        if (cursor_ == pool_.size())
            refill();
        return pool_[cursor_++];
    }

    std::size_t size() const { return pool_.size(); }

private:
    void refill()
    {
        std::shuffle(pool_.begin(), pool_.end(), rng_);
        cursor_ = 0;
    }

    std::vector<std::size_t> pool_;
    Rng& rng_;
    std::size_t cursor_ = 0;
};

void check_items(const std::vector<SslItem>& items, const SslConfig& cfg)
{
    if (items.size() < 2)
        throw DataError("pretraining needs at least two instances");
    for (const auto& it : items)
        if (!it.has_face(cfg.input) && !it.has_body(cfg.input))
            throw DataError("instance " + it.uuid + " has neither a face nor a body input");
}

} // namespace

VectorXd ssl_clean_input(const SslItem& item, PartKind part, const SslConfig& cfg)
{
    if (cfg.input == SslInput::Features)
        return feature_of(item, part);
    return pool_grid(apply_weak(image_of(item, part), WeakPlan{}, part_augment(cfg, part, false)), cfg.pool_grid);
}

Index ssl_input_dim(const std::vector<SslItem>& items, const SslConfig& cfg)
{
    if (cfg.input == SslInput::Pixels)
        return static_cast<Index>(cfg.pool_grid * cfg.pool_grid * 3);
    Index dim = -1;
    for (const auto& it : items)
        for (const auto* f : {&it.face, &it.body})
            if (f->has_value()) {
                if (dim >= 0 && (*f)->size() != dim)
                    throw DataError("feature widths differ between instances");
                dim = (*f)->size();
            }
    if (dim <= 0)
        throw DataError("no features to pretrain on");
    return dim;
}

SslResult train_ssl(const std::vector<SslItem>& items, const SslConfig& cfg)
{
    cfg.validate();
    check_items(items, cfg);
    const Index dim = ssl_input_dim(items, cfg);
    Rng rng(cfg.seed);
    SslResult res{SslModel(dim, cfg), {}};
    res.model.initialize(rng);

    std::vector<std::size_t> all(items.size()), paired;
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].has_face(cfg.input) && items[i].has_body(cfg.input))
            paired.push_back(i);
    if (cfg.aligned && paired.empty())
        throw DataError("aligned pretraining needs instances with both a face and a body");
    Sampler sampler(all, rng);
    std::optional<Sampler> pair_sampler;
    if (!paired.empty())
        pair_sampler.emplace(paired, rng);

    AdamWConfig opt_cfg;
    opt_cfg.weight_decay = cfg.weight_decay;
    AdamW<double> opt(res.model.parameter_count(), opt_cfg);
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), items.size());

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<std::size_t> pick;
        for (std::size_t k = 0; k < batch; ++k)
            pick.push_back(sampler.next());
        std::sort(pick.begin(), pick.end());
        pick.erase(std::unique(pick.begin(), pick.end()), pick.end());
        std::vector<std::size_t> faces, bodies, pairs;
        for (auto i : pick) {
            if (items[i].has_face(cfg.input))
                faces.push_back(i);
            if (items[i].has_body(cfg.input))
                bodies.push_back(i);
            if (items[i].has_face(cfg.input) && items[i].has_body(cfg.input))
                pairs.push_back(i);
        }
        if (cfg.aligned && pairs.empty()) {
            // keep the alignment term defined on unlucky batches
            const auto extra = pair_sampler->next();
            pairs.push_back(extra);
            faces.push_back(extra);
            bodies.push_back(extra);
        }

        const Index nf = static_cast<Index>(faces.size()), nb = static_cast<Index>(bodies.size()),
                    nc = static_cast<Index>(pairs.size());
        MatrixXd x(2 * nf + 2 * nb + 2 * nc, dim);
        Index row = 0;
        for (int view = 0; view < 2; ++view)
            for (auto i : faces)
                x.row(row++) = strong_view(items[i], PartKind::Face, cfg, rng).transpose();
        for (int view = 0; view < 2; ++view)
            for (auto i : bodies)
                x.row(row++) = strong_view(items[i], PartKind::Body, cfg, rng).transpose();
        for (auto i : pairs)
            x.row(row++) = weak_view(items[i], PartKind::Face, cfg, rng).transpose();
        for (auto i : pairs)
            x.row(row++) = weak_view(items[i], PartKind::Body, cfg, rng).transpose();

        const auto fwd = res.model.forward(x);
        if (!fwd.z.allFinite())
            throw NumericError("pretraining diverged at step " + std::to_string(step) + ": non-finite projections");
        const auto loss = identity_aware_loss<double>(fwd.z.topRows(2 * nf), fwd.z.middleRows(2 * nf, 2 * nb),
                                                      fwd.z.bottomRows(2 * nc), cfg.temperature, cfg.aligned);
        MatrixXd grad_z(fwd.z.rows(), fwd.z.cols());
        grad_z << loss.grad_face, loss.grad_body, loss.grad_cross;
        VectorXd g = res.model.backward(fwd, grad_z);
        if (!std::isfinite(loss.report.L_total) || !g.allFinite()) {
            std::ostringstream msg;
            msg << "pretraining diverged at step " << step << ": L_f=" << loss.report.L_f << " L_b=" << loss.report.L_b
                << " L_id=" << loss.report.L_id << " grad norm=" << g.norm();
            throw NumericError(msg.str());
        }
        clip_grad_norm(g, cfg.grad_clip);
        VectorXd p = res.model.parameters();
        opt.step(p, g, cosine_lr(cfg.lr, cfg.lr * cfg.lr_floor_ratio, step, cfg.steps));
        res.model.set_parameters(p);
        res.log.push_back({step, loss.report});
    }
    return res;
}

InBatchStats ssl_cross_modal_eval(const SslModel& model, const std::vector<SslItem>& items, const SslConfig& cfg)
{
    std::vector<const SslItem*> both;
    for (const auto& it : items)
        if (it.has_face(cfg.input) && it.has_body(cfg.input))
            both.push_back(&it);
    if (both.size() < 2)
        throw DataError("cross-modal evaluation needs two instances with both parts");
    MatrixXd f(static_cast<Index>(both.size()), model.input_dim()), b(f.rows(), f.cols());
    for (std::size_t i = 0; i < both.size(); ++i) {
        f.row(static_cast<Index>(i)) = ssl_clean_input(*both[i], PartKind::Face, cfg).transpose();
        b.row(static_cast<Index>(i)) = ssl_clean_input(*both[i], PartKind::Body, cfg).transpose();
    }
    return cross_modal_eval<double>(model.project(f), model.project(b));
}

FeatureTable ssl_export_features(const SslModel& model, const std::vector<SslItem>& items, const SslConfig& cfg)
{
    FeatureTable out;
    for (const auto& it : items) {
        auto& entry = out[it.uuid];
        if (it.has_face(cfg.input))
            entry.face = model.backbone(ssl_clean_input(it, PartKind::Face, cfg).transpose()).row(0).transpose();
        if (it.has_body(cfg.input))
            entry.body = model.backbone(ssl_clean_input(it, PartKind::Body, cfg).transpose()).row(0).transpose();
    }
    return out;
}

std::string ssl_log_csv(const std::vector<SslLogRow>& log)
{
    std::ostringstream out;
    out << "step,L_f,L_b,L_id,top1\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f\n", r.step, r.report.L_f, r.report.L_b, r.report.L_id,
                      r.report.top1);
        out << buf;
    }
    return out.str();
}

Json ssl_config_to_json(const SslConfig& c)
{
    return Json{{"input", to_string(c.input)},
                {"encoder_hidden", c.encoder_hidden},
                {"encoder_dim", c.encoder_dim},
                {"projection_dim", c.projection_dim},
                {"temperature", c.temperature},
                {"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"lr_floor_ratio", c.lr_floor_ratio},
                {"grad_clip", c.grad_clip},
                {"batch_size", c.batch_size},
                {"steps", c.steps},
                {"aligned", c.aligned},
                {"seed", c.seed},
                {"strong_noise", c.strong_noise},
                {"strong_dropout", c.strong_dropout},
                {"weak_noise", c.weak_noise},
                {"face_size", c.face_size},
                {"body_size", c.body_size},
                {"pool_grid", c.pool_grid}};
}

SslConfig ssl_config_from_json(const Json& j)
{
    SslConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "input") c.input = ssl_input_from_string(v.get<std::string>());
        else if (key == "encoder_hidden") c.encoder_hidden = v.get<Index>();
        else if (key == "encoder_dim") c.encoder_dim = v.get<Index>();
        else if (key == "projection_dim") c.projection_dim = v.get<Index>();
        else if (key == "temperature") c.temperature = v.get<double>();
        else if (key == "lr") c.lr = v.get<double>();
        else if (key == "weight_decay") c.weight_decay = v.get<double>();
        else if (key == "lr_floor_ratio") c.lr_floor_ratio = v.get<double>();
        else if (key == "grad_clip") c.grad_clip = v.get<double>();
        else if (key == "batch_size") c.batch_size = v.get<int>();
        else if (key == "steps") c.steps = v.get<int>();
        else if (key == "aligned") c.aligned = v.get<bool>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "strong_noise") c.strong_noise = v.get<double>();
        else if (key == "strong_dropout") c.strong_dropout = v.get<double>();
        else if (key == "weak_noise") c.weak_noise = v.get<double>();
        else if (key == "face_size") c.face_size = v.get<int>();
        else if (key == "body_size") c.body_size = v.get<int>();
        else if (key == "pool_grid") c.pool_grid = v.get<int>();
        else throw std::invalid_argument("unknown pretraining config key: " + key);
    }
    c.validate();
    return c;
}

namespace {

Json layer_list(const std::string& prefix, const Mlp<double>& net)
{
    Json layers = Json::array();
    for (std::size_t l = 0; l < net.layers(); ++l)
        layers.push_back({{"name", prefix + "." + std::to_string(l)},
                          {"weight", {net.widths()[l + 1], net.widths()[l]}},
                          {"bias", {net.widths()[l + 1]}}});
    return layers;
}

} // namespace

void save_ssl_checkpoint(const SslModel& model, const SslConfig& cfg, const std::filesystem::path& path)
{
    Json j;
    j["format"] = "comicreid.ssl";
    j["version"] = kCheckpointVersion;
    j["input_dim"] = model.input_dim();
    j["config"] = ssl_config_to_json(cfg);
    Json layers = layer_list("encoder", model.encoder());
    for (auto& l : layer_list("head", model.head()))
        layers.push_back(l);
    j["layers"] = layers;
    const VectorXd p = model.parameters();
    j["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
    write_text_file(path, j.dump() + "\n");
}

SslModel load_ssl_checkpoint(const std::filesystem::path& path, SslConfig* cfg_out)
{
    const Json j = Json::parse(read_text_file(path));
    if (j.value("format", "") != "comicreid.ssl")
        throw DataError(path.string() + " is not a pretraining checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
        throw DataError("unsupported pretraining checkpoint version in " + path.string());
    const SslConfig cfg = ssl_config_from_json(j.at("config"));
    SslModel model(j.at("input_dim").get<Index>(), cfg);
    const auto p = j.at("parameters").get<std::vector<double>>();
    if (static_cast<Index>(p.size()) != model.parameter_count())
        throw DataError("checkpoint parameter count does not match its layers: " + path.string());
    model.set_parameters(Eigen::Map<const VectorXd>(p.data(), static_cast<Index>(p.size())));
    if (cfg_out)
        *cfg_out = cfg;
    return model;
}

} // namespace comicreid
