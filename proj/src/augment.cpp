#include "comicreid/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace comicreid {

bool ImageBuffer::valid() const
{
    return width > 0 && height > 0 && data.size() == static_cast<std::size_t>(width * height * 3);
}

namespace {

void require(const ImageBuffer& img)
{
    if (!img.valid())
        throw std::invalid_argument("image buffer is empty or inconsistent");
}

int reflect101(int i, int n)
{
    if (n == 1)
        return 0;
    const int period = 2 * n - 2;
    i %= period;
    if (i < 0)
        i += period;
    return i < n ? i : period - i;
}

float clamp01(double v)
{
    return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

double gray_of(const ImageBuffer& img, int y, int x)
{
    return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

double bernoulli(Rng& rng)
{
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Correlation with an arbitrary odd-sized kernel (row-major k x k), reflect-101 borders.
ImageBuffer filter2d(const ImageBuffer& img, const std::vector<double>& kernel, int k)
{
    ImageBuffer out(img.width, img.height);
    const int r = k / 2;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const double w = kernel[static_cast<std::size_t>((dy + r) * k + dx + r)];
                        if (w != 0.0)
                            acc += w * img.at(reflect101(y + dy, img.height), reflect101(x + dx, img.width), c);
                    }
                out.at(y, x, c) = static_cast<float>(acc);
            }
    return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v)
{
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx > 0 ? d / mx : 0.0;
    if (d <= 0) {
        h = 0.0;
        return;
    }
    if (mx == r)
        h = (g - b) / d;
    else if (mx == g)
        h = 2.0 + (b - r) / d;
    else
        h = 4.0 + (r - g) / d;
    h /= 6.0;
    h -= std::floor(h);
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b)
{
    const double h6 = h * 6.0;
    const int i = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
    }
}

} // namespace

ImageBuffer hflip(const ImageBuffer& img)
{
    require(img);
    ImageBuffer out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height)
{
    require(img);
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("resize target must be positive");
    if (width == img.width && height == img.height)
        return img;
    ImageBuffer out(width, height);
    const double sx = static_cast<double>(img.width) / width, sy = static_cast<double>(img.height) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
                const double bot = (1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
                out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

ImageBuffer crop(const ImageBuffer& img, const CropBox& box)
{
    require(img);
    if (box.width <= 0 || box.height <= 0 || box.left < 0 || box.top < 0 || box.left + box.width > img.width ||
        box.top + box.height > img.height)
        throw std::invalid_argument("crop box outside the image");
    ImageBuffer out(box.width, box.height);
    for (int y = 0; y < box.height; ++y)
        for (int x = 0; x < box.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = img.at(box.top + y, box.left + x, c);
    return out;
}

ImageBuffer adjust_brightness(const ImageBuffer& img, double factor)
{
    require(img);
    ImageBuffer out = img;
    for (auto& v : out.data)
        v = clamp01(v * factor);
    return out;
}

ImageBuffer adjust_contrast(const ImageBuffer& img, double factor)
{
    require(img);
    double mean = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            mean += gray_of(img, y, x);
    mean /= static_cast<double>(img.width * img.height);
    ImageBuffer out = img;
    for (auto& v : out.data)
        v = clamp01(factor * v + (1 - factor) * mean);
    return out;
}

ImageBuffer adjust_saturation(const ImageBuffer& img, double factor)
{
    require(img);
    ImageBuffer out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double g = gray_of(img, y, x);
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = clamp01(factor * img.at(y, x, c) + (1 - factor) * g);
        }
    return out;
}

ImageBuffer adjust_hue(const ImageBuffer& img, double shift)
{
    require(img);
    if (shift < -0.5 || shift > 0.5)
        throw std::invalid_argument("hue shift must lie in [-0.5, 0.5]");
    ImageBuffer out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double h, s, v, r, g, b;
            rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), h, s, v);
            h += shift;
            h -= std::floor(h);
            hsv_to_rgb(h, s, v, r, g, b);
            out.at(y, x, 0) = clamp01(r);
            out.at(y, x, 1) = clamp01(g);
            out.at(y, x, 2) = clamp01(b);
        }
    return out;
}

ImageBuffer to_grayscale(const ImageBuffer& img)
{
    require(img);
    ImageBuffer out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const auto g = static_cast<float>(gray_of(img, y, x));
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = g;
        }
    return out;
}

ImageBuffer gaussian_blur(const ImageBuffer& img, int kernel, double sigma)
{
    require(img);
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("blur kernel size must be odd and positive");
    if (sigma <= 0)
        sigma = 0.3 * ((kernel - 1) * 0.5 - 1) + 0.8;
    const int r = kernel / 2;
    std::vector<double> w(static_cast<std::size_t>(kernel));
    double total = 0.0;
    for (int i = -r; i <= r; ++i)
        total += w[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : w)
        v /= total;

    ImageBuffer tmp(img.width, img.height), out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i)
                    acc += w[static_cast<std::size_t>(i + r)] * img.at(y, reflect101(x + i, img.width), c);
                tmp.at(y, x, c) = static_cast<float>(acc);
            }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i)
                    acc += w[static_cast<std::size_t>(i + r)] * tmp.at(reflect101(y + i, img.height), x, c);
                out.at(y, x, c) = static_cast<float>(acc);
            }
    return out;
}

ImageBuffer box_blur(const ImageBuffer& img, int kernel)
{
    require(img);
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("blur kernel size must be odd and positive");
    return filter2d(img, std::vector<double>(static_cast<std::size_t>(kernel * kernel), 1.0 / (kernel * kernel)), kernel);
}

ImageBuffer median_blur(const ImageBuffer& img, int kernel)
{
    require(img);
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("blur kernel size must be odd and positive");
    const int r = kernel / 2;
    ImageBuffer out(img.width, img.height);
    std::vector<float> window;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                window.clear();
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        window.push_back(img.at(reflect101(y + dy, img.height), reflect101(x + dx, img.width), c));
                auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
                std::nth_element(window.begin(), mid, window.end());
                out.at(y, x, c) = *mid;
            }
    return out;
}

ImageBuffer motion_blur(const ImageBuffer& img, int kernel, int angle_deg)
{
    require(img);
    if (kernel < 3 || kernel % 2 == 0)
        throw std::invalid_argument("motion blur kernel size must be odd and at least 3");
    if (angle_deg % 45 != 0)
        throw std::invalid_argument("motion blur angle must be a multiple of 45 degrees");
    const int a = ((angle_deg % 180) + 180) % 180;
    const int r = kernel / 2;
    std::vector<double> k(static_cast<std::size_t>(kernel * kernel), 0.0);
    for (int t = -r; t <= r; ++t) {
        int dy = 0, dx = 0;
        switch (a) {
        case 0: dx = t; break;
        case 45: dx = t, dy = -t; break;
        case 90: dy = t; break;
        default: dx = t, dy = t; break;
        }
        k[static_cast<std::size_t>((dy + r) * kernel + dx + r)] = 1.0 / kernel;
    }
    return filter2d(img, k, kernel);
}

ImageBuffer shift_scale_rotate(const ImageBuffer& img, double shift_x, double shift_y, double scale, double angle_deg)
{
    require(img);
    if (scale <= 0)
        throw std::invalid_argument("scale must be positive");
    const double cx = 0.5 * (img.width - 1), cy = 0.5 * (img.height - 1);
    const double th = angle_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    const double tx = shift_x * img.width, ty = shift_y * img.height;
    ImageBuffer out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            // inverse map: undo the shift, then the rotation and scale about the centre
            const double ux = x - cx - tx, uy = y - cy - ty;
            const double sx = (cs * ux + sn * uy) / scale + cx;
            const double sy = (-sn * ux + cs * uy) / scale + cy;
            const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
            const double wx = sx - x0, wy = sy - y0;
            const int xa = reflect101(x0, img.width), xb = reflect101(x0 + 1, img.width);
            const int ya = reflect101(y0, img.height), yb = reflect101(y0 + 1, img.height);
            for (int c = 0; c < 3; ++c) {
                const double top = (1 - wx) * img.at(ya, xa, c) + wx * img.at(ya, xb, c);
                const double bot = (1 - wx) * img.at(yb, xa, c) + wx * img.at(yb, xb, c);
                out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bot);
            }
        }
    return out;
}

ImageBuffer longest_max_size(const ImageBuffer& img, int max_size)
{
    require(img);
    if (max_size <= 0)
        throw std::invalid_argument("target size must be positive");
    const double s = static_cast<double>(max_size) / std::max(img.width, img.height);
    const int w = std::max(1, static_cast<int>(std::lround(img.width * s)));
    const int h = std::max(1, static_cast<int>(std::lround(img.height * s)));
    return resize_bilinear(img, w, h);
}

ImageBuffer pad_to(const ImageBuffer& img, int size)
{
    require(img);
    const int w = std::max(img.width, size), h = std::max(img.height, size);
    if (w == img.width && h == img.height)
        return img;
    const int top = (h - img.height) / 2, left = (w - img.width) / 2;
    ImageBuffer out(w, h, 0.0f);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(top + y, left + x, c) = img.at(y, x, c);
    return out;
}

ImageBuffer normalize(const ImageBuffer& img)
{
    require(img);
    ImageBuffer out = img;
    for (auto& v : out.data)
        v = (v - 0.5f) / 0.5f;
    return out;
}

CropBox sample_resized_crop(int width, int height, double min_scale, Rng& rng)
{
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("image size must be positive");
    if (!(min_scale > 0 && min_scale <= 1))
        throw std::invalid_argument("min_scale must lie in (0, 1]");
    const double area = static_cast<double>(width) * height;
    const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * uniform(rng, min_scale, 1.0);
        const double ratio = std::exp(uniform(rng, log_lo, log_hi));
        const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
        const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
        if (w > 0 && h > 0 && w <= width && h <= height) {
            const int top = uniform_int(rng, 0, height - h);
            const int left = uniform_int(rng, 0, width - w);
            return {top, left, h, w};
        }
    }
    const double in_ratio = static_cast<double>(width) / height;
    int w = width, h = height;
    if (in_ratio < 3.0 / 4.0)
        h = static_cast<int>(std::lround(w / (3.0 / 4.0)));
    else if (in_ratio > 4.0 / 3.0)
        w = static_cast<int>(std::lround(h * (4.0 / 3.0)));
    w = std::clamp(w, 1, width);
    h = std::clamp(h, 1, height);
    return {(height - h) / 2, (width - w) / 2, h, w};
}

StrongPlan sample_strong_plan(const ImageBuffer& img, const AugmentConfig& cfg, Rng& rng)
{
    require(img);
    StrongPlan plan;
    plan.flip = bernoulli(rng) < 0.5;
    plan.crop = sample_resized_crop(img.width, img.height, cfg.min_scale, rng);
    plan.jitter.apply = bernoulli(rng) < 0.8;
    if (plan.jitter.apply) {
        std::shuffle(plan.jitter.order.begin(), plan.jitter.order.end(), rng);
        plan.jitter.brightness = uniform(rng, 0.5, 1.5);
        plan.jitter.contrast = uniform(rng, 0.5, 1.5);
        plan.jitter.saturation = uniform(rng, 0.5, 1.5);
        plan.jitter.hue = uniform(rng, -0.1, 0.1);
    }
    plan.grayscale = bernoulli(rng) < 0.2;
    return plan;
}

ImageBuffer apply_strong(const ImageBuffer& img, const StrongPlan& plan, const AugmentConfig& cfg)
{
    require(img);
    if (cfg.target_size <= 0)
        throw std::invalid_argument("target size must be positive");
    ImageBuffer x = plan.flip ? hflip(img) : img;
    x = resize_bilinear(crop(x, plan.crop), cfg.target_size, cfg.target_size);
    if (plan.jitter.apply) {
        for (int op : plan.jitter.order) {
            switch (op) {
            case 0: x = adjust_brightness(x, plan.jitter.brightness); break;
            case 1: x = adjust_contrast(x, plan.jitter.contrast); break;
            case 2: x = adjust_saturation(x, plan.jitter.saturation); break;
            default: x = adjust_hue(x, plan.jitter.hue); break;
            }
        }
    }
    if (plan.grayscale)
        x = to_grayscale(x);
    x = gaussian_blur(x, 9);
    return normalize(x);
}

ImageBuffer strong_augment(const ImageBuffer& img, const AugmentConfig& cfg, Rng& rng)
{
    return apply_strong(img, sample_strong_plan(img, cfg, rng), cfg);
}

WeakPlan sample_weak_plan(const AugmentConfig& cfg, Rng& rng)
{
    if (cfg.target_size <= 0)
        throw std::invalid_argument("target size must be positive");
    WeakPlan plan;
    plan.crop_apply = bernoulli(rng) < 0.25;
    if (plan.crop_apply)
        plan.crop = sample_resized_crop(cfg.target_size, cfg.target_size, cfg.min_scale, rng);
    plan.flip = bernoulli(rng) < 0.5;
    plan.affine_apply = bernoulli(rng) < 0.5;
    if (plan.affine_apply) {
        plan.shift_x = uniform(rng, -0.05, 0.05);
        plan.shift_y = uniform(rng, -0.05, 0.05);
        plan.scale = 1.0 + uniform(rng, -0.05, 0.05);
        plan.angle_deg = uniform(rng, -15.0, 15.0);
    }
    plan.blur_apply = bernoulli(rng) < 0.1;
    if (plan.blur_apply) {
        plan.blur = static_cast<BlurKind>(uniform_int(rng, 0, 3));
        switch (plan.blur) {
        case BlurKind::Gaussian: plan.blur_kernel = uniform_int(rng, 0, 1) == 0 ? 5 : 7; break;
        case BlurKind::Motion:
            plan.blur_kernel = 3 + 2 * uniform_int(rng, 0, 2);
            plan.motion_angle_deg = 45 * uniform_int(rng, 0, 3);
            break;
        default: plan.blur_kernel = 3; break;
        }
    }
    plan.grayscale = bernoulli(rng) < 0.2;
    return plan;
}

ImageBuffer apply_weak(const ImageBuffer& img, const WeakPlan& plan, const AugmentConfig& cfg)
{
    require(img);
    const int n = cfg.target_size;
    if (n <= 0)
        throw std::invalid_argument("target size must be positive");
    ImageBuffer x = pad_to(longest_max_size(img, n), n);
    if (plan.crop_apply)
        x = resize_bilinear(crop(x, plan.crop), n, n);
    if (plan.flip)
        x = hflip(x);
    if (plan.affine_apply)
        x = shift_scale_rotate(x, plan.shift_x, plan.shift_y, plan.scale, plan.angle_deg);
    if (plan.blur_apply) {
        switch (plan.blur) {
        case BlurKind::Gaussian: x = gaussian_blur(x, plan.blur_kernel); break;
        case BlurKind::Motion: x = motion_blur(x, plan.blur_kernel, plan.motion_angle_deg); break;
        case BlurKind::Median: x = median_blur(x, plan.blur_kernel); break;
        case BlurKind::Box: x = box_blur(x, plan.blur_kernel); break;
        }
    }
    if (plan.grayscale)
        x = to_grayscale(x);
    return normalize(x);
}

ImageBuffer weak_augment(const ImageBuffer& img, const AugmentConfig& cfg, Rng& rng)
{
    return apply_weak(img, sample_weak_plan(cfg, rng), cfg);
}

VectorXd pool_grid(const ImageBuffer& img, int grid)
{
    require(img);
    if (grid <= 0)
        throw std::invalid_argument("grid must be positive");
    VectorXd out = VectorXd::Zero(grid * grid * 3);
    Eigen::VectorXi count = Eigen::VectorXi::Zero(grid * grid);
    for (int y = 0; y < img.height; ++y) {
        const int gy = y * grid / img.height;
        for (int x = 0; x < img.width; ++x) {
            const int gx = x * grid / img.width;
            const int cell = gy * grid + gx;
            ++count(cell);
            for (int c = 0; c < 3; ++c)
                out(cell * 3 + c) += img.at(y, x, c);
        }
    }
    for (int cell = 0; cell < grid * grid; ++cell)
        if (count(cell) > 0)
            out.segment(cell * 3, 3) /= count(cell);
    return out;
}

ImageBuffer read_ppm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open image " + path.string());
    std::string magic;
    in >> magic;
    const auto token = [&]() {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string skip;
            std::getline(in, skip);
            in >> std::ws;
        }
        int v = -1;
        in >> v;
        return v;
    };
    const int w = token(), h = token(), maxval = token();
    if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
        throw DataError("unsupported image (need binary PPM with maxval 255): " + path.string());
    in.get();
    std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * 3));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DataError("truncated image " + path.string());
    ImageBuffer img(w, h);
    for (std::size_t i = 0; i < raw.size(); ++i)
        img.data[i] = raw[i] / 255.0f;
    return img;
}

void write_ppm(const ImageBuffer& img, const std::filesystem::path& path)
{
    require(img);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write image " + path.string());
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    for (float v : img.data)
        out.put(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
}

} // namespace comicreid
