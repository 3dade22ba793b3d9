#pragma once

// Synthetic comic corpus: identities are latent unit vectors, observed through separate face
// and body maps plus a per-series style offset and noise. Characters appear in contiguous
// panel runs on one page, so overlapping sequences share instances and link.

#include "comicreid/augment.hpp"
#include "comicreid/features.hpp"
#include "comicreid/types.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace comicreid {

struct SynthConfig {
    int identities = 20;
    int series = 6;
    int latent_dim = 8;
    int feature_dim = 32;
    int style_dim = 4;
    int panels_per_page = 10;
    int characters_per_page = 2;
    int sequence_stride = 3;
    double instance_jitter = 0.15;
    double feature_noise = 0.03;
    double style_scale = 1.0;
    double face_dropout = 0.25; // probability that an instance has no face
    double body_dropout = 0.25; // probability that an instance has no body
    int image_size = 0;         // > 0 also renders square RGB images per part
    std::uint64_t seed = 7;

    void validate() const;
};

struct SynthDataset {
    std::vector<Detection> detections;
    std::vector<CharacterInstance> instances;
    std::vector<PanelSequence> sequences; // annotated with sequence-local identity ids
    FeatureTable features;
    std::map<std::string, std::string> identity_of; // instance uuid -> global identity
    std::map<std::string, ImageBuffer> face_images;
    std::map<std::string, ImageBuffer> body_images;
};

SynthDataset generate_synthetic(const SynthConfig& cfg);

/// Writes detections.csv, instances.jsonl, sequences.jsonl, features.jsonl, truth.jsonl and,
/// when images were rendered, images.jsonl.
void write_synthetic(const SynthDataset& ds, const std::filesystem::path& dir);

std::map<std::string, std::string> read_truth(const std::filesystem::path& path);

void write_images(const std::map<std::string, ImageBuffer>& faces, const std::map<std::string, ImageBuffer>& bodies,
                  const std::filesystem::path& path);
void read_images(const std::filesystem::path& path, std::map<std::string, ImageBuffer>& faces,
                 std::map<std::string, ImageBuffer>& bodies);

} // namespace comicreid
