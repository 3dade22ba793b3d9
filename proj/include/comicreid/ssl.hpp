#pragma once

// Toy-scale identity-aware contrastive pretraining. A shared encoder maps face and body inputs
// (feature vectors, or augmented images pooled to a coarse grid) to backbone features; a
// three-layer head maps those to 128-d projections used by the losses.

#include "comicreid/augment.hpp"
#include "comicreid/codec.hpp"
#include "comicreid/contrastive.hpp"
#include "comicreid/features.hpp"
#include "comicreid/mlp.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace comicreid {

enum class SslInput { Features, Pixels };

std::string to_string(SslInput m);
SslInput ssl_input_from_string(const std::string& s);

struct SslConfig {
    SslInput input = SslInput::Features;
    Index encoder_hidden = 64;
    Index encoder_dim = 32;   // backbone width D
    Index projection_dim = 128;
    double temperature = 0.07;
    double lr = 5e-4;
    double weight_decay = 0.01;
    double lr_floor_ratio = 1.0 / 50.0;
    double grad_clip = 0.5;
    int batch_size = 32;      // instances per step
    int steps = 200;
    bool aligned = true;
    std::uint64_t seed = 0;

    // feature-mode views
    double strong_noise = 0.3;
    double strong_dropout = 0.2;
    double weak_noise = 0.05;

    // pixel-mode views
    int face_size = 16;
    int body_size = 16;
    int pool_grid = 4;

    void validate() const;
};

/// One training instance; which fields are used depends on SslConfig::input.
struct SslItem {
    std::string uuid;
    std::optional<VectorXd> face;
    std::optional<VectorXd> body;
    std::optional<ImageBuffer> face_image;
    std::optional<ImageBuffer> body_image;

    bool has_face(SslInput m) const { return m == SslInput::Features ? face.has_value() : face_image.has_value(); }
    bool has_body(SslInput m) const { return m == SslInput::Features ? body.has_value() : body_image.has_value(); }
};

std::vector<SslItem> ssl_items_from_features(const FeatureTable& table);
std::vector<SslItem> ssl_items_from_images(const std::map<std::string, ImageBuffer>& faces,
                                           const std::map<std::string, ImageBuffer>& bodies);

Json ssl_config_to_json(const SslConfig& cfg);
/// Unknown keys are rejected.
SslConfig ssl_config_from_json(const Json& j);

class SslModel {
public:
    SslModel() = default;
    SslModel(Index input_dim, const SslConfig& cfg);

    void initialize(Rng& rng);

    Index input_dim() const { return encoder_.input_dim(); }
    Index parameter_count() const { return encoder_.parameter_count() + head_.parameter_count(); }
    VectorXd parameters() const;
    void set_parameters(const VectorXd& p);
    const Mlp<double>& encoder() const { return encoder_; }
    const Mlp<double>& head() const { return head_; }

    /// Unnormalised head output for a batch of encoder inputs.
    MatrixXd project(const MatrixXd& x) const;
    /// Backbone feature: encoder output followed by the first head layer (ReLU).
    MatrixXd backbone(const MatrixXd& x) const;

    struct Step {
        MatrixXd z;
        Mlp<double>::Cache enc_cache, head_cache;
    };
    Step forward(const MatrixXd& x) const;
    /// Parameter gradient for dL/dz.
    VectorXd backward(const Step& step, const MatrixXd& grad_z) const;

private:
    Mlp<double> encoder_;
    Mlp<double> head_;
};

struct SslLogRow {
    int step = 0;
    SslLossReport report;
};

struct SslResult {
    SslModel model;
    std::vector<SslLogRow> log;
};

/// Encoder input for an item part without augmentation (feature as-is, or the image resized
/// and padded to the part size, normalised and pooled).
VectorXd ssl_clean_input(const SslItem& item, PartKind part, const SslConfig& cfg);
Index ssl_input_dim(const std::vector<SslItem>& items, const SslConfig& cfg);

SslResult train_ssl(const std::vector<SslItem>& items, const SslConfig& cfg);

/// Face-query -> body-gallery retrieval over the given items that have both parts.
InBatchStats ssl_cross_modal_eval(const SslModel& model, const std::vector<SslItem>& items, const SslConfig& cfg);

/// Backbone features of every item part, ready for fine-tuning.
FeatureTable ssl_export_features(const SslModel& model, const std::vector<SslItem>& items, const SslConfig& cfg);

std::string ssl_log_csv(const std::vector<SslLogRow>& log);

void save_ssl_checkpoint(const SslModel& model, const SslConfig& cfg, const std::filesystem::path& path);
/// Restores the model and the configuration it was trained with.
SslModel load_ssl_checkpoint(const std::filesystem::path& path, SslConfig* cfg = nullptr);

} // namespace comicreid
