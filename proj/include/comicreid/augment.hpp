#pragma once

// Seeded strong and weak augmentation pipelines over small RGB buffers. Each pipeline first
// samples a plan (all random decisions) and then applies it, so a plan can also be built by
// hand with every random branch switched off.

#include "comicreid/types.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace comicreid {

struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<float> data; // height * width * 3, row-major, channel last

    ImageBuffer() = default;
    ImageBuffer(int w, int h, float fill = 0.0f) : width(w), height(h), data(static_cast<std::size_t>(w * h * 3), fill) {}

    float& at(int y, int x, int c) { return data[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
    float at(int y, int x, int c) const { return data[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
    bool valid() const;
};

struct AugmentConfig {
    int target_size = 96;   // 96 for faces, 128 for bodies
    double min_scale = 0.08; // strong: 0.08; weak: 0.2 faces, 0.5 bodies
};

struct CropBox {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
};

struct JitterPlan {
    bool apply = false;
    std::array<int, 4> order{0, 1, 2, 3}; // 0 brightness, 1 contrast, 2 saturation, 3 hue
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
    double hue = 0.0;
};

struct StrongPlan {
    bool flip = false;
    CropBox crop;
    JitterPlan jitter;
    bool grayscale = false;
};

enum class BlurKind { Gaussian, Motion, Median, Box };

struct WeakPlan {
    bool crop_apply = false;
    CropBox crop;
    bool flip = false;
    bool affine_apply = false;
    double shift_x = 0.0; // fraction of width
    double shift_y = 0.0;
    double scale = 1.0;
    double angle_deg = 0.0;
    bool blur_apply = false;
    BlurKind blur = BlurKind::Box;
    int blur_kernel = 3;
    int motion_angle_deg = 0;
    bool grayscale = false;
};

// primitive operations
ImageBuffer hflip(const ImageBuffer& img);
/// Bilinear resize with half-pixel centres and clamped edges.
ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height);
ImageBuffer crop(const ImageBuffer& img, const CropBox& box);
ImageBuffer adjust_brightness(const ImageBuffer& img, double factor);
ImageBuffer adjust_contrast(const ImageBuffer& img, double factor);
ImageBuffer adjust_saturation(const ImageBuffer& img, double factor);
ImageBuffer adjust_hue(const ImageBuffer& img, double shift);
ImageBuffer to_grayscale(const ImageBuffer& img);
/// Separable Gaussian blur, reflect-101 borders; sigma <= 0 derives it from the kernel size
/// as 0.3 * ((k - 1) / 2 - 1) + 0.8.
ImageBuffer gaussian_blur(const ImageBuffer& img, int kernel, double sigma = 0.0);
ImageBuffer box_blur(const ImageBuffer& img, int kernel);
ImageBuffer median_blur(const ImageBuffer& img, int kernel);
ImageBuffer motion_blur(const ImageBuffer& img, int kernel, int angle_deg);
/// Rotation by angle_deg and scaling about the centre, then a shift by a fraction of the size;
/// bilinear sampling with reflect-101 borders.
ImageBuffer shift_scale_rotate(const ImageBuffer& img, double shift_x, double shift_y, double scale, double angle_deg);
ImageBuffer longest_max_size(const ImageBuffer& img, int max_size);
/// Pads with black to at least size x size, keeping the image centred.
ImageBuffer pad_to(const ImageBuffer& img, int size);
/// (x - 0.5) / 0.5
ImageBuffer normalize(const ImageBuffer& img);

/// Random-resized-crop box: up to ten attempts at a random area fraction in [min_scale, 1] and
/// log-uniform aspect ratio in [3/4, 4/3]; otherwise a centred crop clamped to the ratio range.
CropBox sample_resized_crop(int width, int height, double min_scale, Rng& rng);

StrongPlan sample_strong_plan(const ImageBuffer& img, const AugmentConfig& cfg, Rng& rng);
ImageBuffer apply_strong(const ImageBuffer& img, const StrongPlan& plan, const AugmentConfig& cfg);
/// flip p=0.5, resized crop to N, colour jitter p=0.8 (0.5, 0.5, 0.5, 0.1), grayscale p=0.2,
/// Gaussian blur k=9, normalise.
ImageBuffer strong_augment(const ImageBuffer& img, const AugmentConfig& cfg, Rng& rng);

WeakPlan sample_weak_plan(const AugmentConfig& cfg, Rng& rng);
ImageBuffer apply_weak(const ImageBuffer& img, const WeakPlan& plan, const AugmentConfig& cfg);
/// longest side to N, black pad to N x N, resized crop p=0.25, flip p=0.5, shift/scale 0.05 and
/// rotation up to 15 degrees p=0.5, one of four blurs p=0.1, grayscale p=0.2, normalise.
ImageBuffer weak_augment(const ImageBuffer& img, const AugmentConfig& cfg, Rng& rng);

/// Average over a grid x grid partition of the image, flattened channel last.
VectorXd pool_grid(const ImageBuffer& img, int grid);

/// Binary PPM (P6, maxval 255).
ImageBuffer read_ppm(const std::filesystem::path& path);
void write_ppm(const ImageBuffer& img, const std::filesystem::path& path);

} // namespace comicreid
