#pragma once

#include "comicreid/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace comicreid {

struct PairingConfig {
    std::int64_t min_bbox_area = 64;
    double min_score = 0.95;
    /// A face pairs with a body when area(face ∩ body) / area(face) exceeds this.
    double min_overlap_ratio = 0.95;
    double face_scale = 1.2;

    void validate() const;
};

/// Keeps detections with area >= min_bbox_area and score >= min_score (both inclusive).
std::vector<Detection> filter_detections(const std::vector<Detection>& dets, const PairingConfig& cfg);

/// Pairs faces and bodies of one panel.
///
/// Candidate pairs are those whose overlap ratio (normalised by face area) is strictly above
/// `cfg.min_overlap_ratio`. Candidates are accepted greedily in ascending |face.y0 - body.y0|
/// order (ties by face index, then body index) so that every detection ends up in at most
/// one instance. Returned instances list faces in index order, then unpaired bodies; their
/// `char_index` is their position in that list.
std::vector<CharacterInstance> pair_face_body(const std::vector<Detection>& faces,
                                              const std::vector<Detection>& bodies, const PairingConfig& cfg,
                                              Rng& rng);

/// Groups detections by panel and pairs each panel. Panels are visited in sorted order.
std::vector<CharacterInstance> build_instances(const std::vector<Detection>& dets, const PairingConfig& cfg,
                                               Rng& rng);

/// Square crop around a face: side = round(scale * max(w, h)), centred on the box, translated
/// back inside the image, and only shrunk when the image itself is smaller than the side.
BBox face_square_crop_box(const BBox& face, double scale, std::int64_t image_w, std::int64_t image_h);

/// Cuts each page's panels (ordered by numeric panel id) into windows of 4 consecutive panels.
/// `stride` < 4 produces overlapping windows that share panels, and therefore instances.
std::vector<PanelSequence> build_sequences(const std::vector<CharacterInstance>& instances, int stride = 4);

struct SplitConfig {
    std::size_t sequence_threshold = 800;
    double val_fraction = 0.4;
    double test_fraction = 0.4;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Split { Train, Val, Test };
std::string to_string(Split s);

struct SplitResult {
    std::vector<PanelSequence> train;
    std::vector<PanelSequence> val;
    std::vector<PanelSequence> test;
    std::map<std::string, Split> series_split;
    std::vector<std::string> pool_series; // ascending-size series that formed the val/test pool
};

/// Series-level split. Series are sorted by ascending sequence count (ties by id) and added to
/// the evaluation pool until the cumulative sequence count reaches the threshold. Pool series are
/// shuffled by `seed`; val takes series until it holds val_fraction of the pool's sequences, test
/// likewise, and the rest of the pool joins every non-pool series in train.
SplitResult split_sequences(const std::vector<PanelSequence>& sequences, const SplitConfig& cfg);

} // namespace comicreid
