#include "comicreid/synth.hpp"

#include "comicreid/codec.hpp"
#include "comicreid/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace comicreid {

void SynthConfig::validate() const
{
    if (identities < 1 || series < 1 || series > identities)
        throw std::invalid_argument("synth needs 1 <= series <= identities");
    if (latent_dim < 1 || feature_dim < 1 || style_dim < 0)
        throw std::invalid_argument("synth dimensions must be positive");
    if (panels_per_page < 4 || characters_per_page < 1 || sequence_stride < 1)
        throw std::invalid_argument("synth pages need at least 4 panels and one character");
    if (face_dropout < 0 || body_dropout < 0 || face_dropout + body_dropout >= 1.0)
        throw std::invalid_argument("face and body dropout must be non-negative with sum < 1");
    if (instance_jitter < 0 || feature_noise < 0 || style_scale < 0 || image_size < 0)
        throw std::invalid_argument("synth noise scales must be non-negative");
}

namespace {

MatrixXd gaussian(Rng& rng, Index rows, Index cols, double sd)
{
    std::normal_distribution<double> n(0.0, sd);
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            m(i, j) = n(rng);
    return m;
}

VectorXd gaussian_vec(Rng& rng, Index n, double sd)
{
    return gaussian(rng, n, 1, sd).col(0);
}

std::string two_digits(int k)
{
    return (k < 10 ? "0" : "") + std::to_string(k);
}

/// Identity counts per series, proportional to 1, 2, ..., series and at least one each.
std::vector<int> series_sizes(int identities, int series)
{
    std::vector<int> sizes(static_cast<std::size_t>(series), 1);
    int left = identities - series;
    const int total_weight = series * (series + 1) / 2;
    for (int s = 0; s < series; ++s) {
        const int extra = static_cast<int>(std::floor(static_cast<double>((identities - series) * (s + 1)) /
                                                      static_cast<double>(total_weight)));
        sizes[static_cast<std::size_t>(s)] += extra;
        left -= extra;
    }
    for (int s = series - 1; left > 0; s = (s + series - 1) % series, --left)
        ++sizes[static_cast<std::size_t>(s)];
    return sizes;
}

ImageBuffer render(const VectorXd& top, const VectorXd& bottom, int size, Rng& rng)
{
    std::normal_distribution<double> n(0.0, 0.02);
    ImageBuffer img(size, size);
    for (int y = 0; y < size; ++y) {
        const double mix = size > 1 ? static_cast<double>(y) / (size - 1) : 0.0;
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = (1 - mix) * top(c) + mix * bottom(c) + n(rng);
                img.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
    }
    return img;
}

VectorXd sigmoid(const VectorXd& v)
{
    return (1.0 / (1.0 + (-v.array()).exp())).matrix();
}

} // namespace

SynthDataset generate_synthetic(const SynthConfig& cfg)
{
    cfg.validate();
    Rng rng(cfg.seed);
    const Index L = cfg.latent_dim, F = cfg.feature_dim, S = cfg.style_dim;

    // observation model shared by the whole corpus
    const MatrixXd face_map = gaussian(rng, F, L, 1.0 / std::sqrt(static_cast<double>(F)));
    const MatrixXd body_map = gaussian(rng, F, L, 1.0 / std::sqrt(static_cast<double>(F)));
    const MatrixXd style_map = gaussian(rng, F, std::max<Index>(S, 1), 1.0 / std::sqrt(static_cast<double>(F)));
    const MatrixXd face_colors = gaussian(rng, 6, L, 2.0);
    const MatrixXd body_colors = gaussian(rng, 6, L, 2.0);

    std::vector<VectorXd> latent;
    for (int i = 0; i < cfg.identities; ++i)
        latent.push_back(gaussian_vec(rng, L, 1.0).normalized());

    SynthDataset ds;
    const auto sizes = series_sizes(cfg.identities, cfg.series);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<std::int64_t> coord(0, 700);
    int next_identity = 0;
    for (int s = 0; s < cfg.series; ++s) {
        const std::string series_id = "s" + two_digits(s + 1);
        VectorXd face_style = VectorXd::Zero(F), body_style = VectorXd::Zero(F);
        if (S > 0) {
            face_style = style_map * gaussian_vec(rng, S, cfg.style_scale);
            body_style = style_map * gaussian_vec(rng, S, cfg.style_scale);
        }
        std::vector<int> cast;
        for (int k = 0; k < sizes[static_cast<std::size_t>(s)]; ++k)
            cast.push_back(next_identity++);

        const int pages = (static_cast<int>(cast.size()) + cfg.characters_per_page - 1) / cfg.characters_per_page;
        for (int p = 0; p < pages; ++p) {
            const std::string page_id = std::to_string(p + 1);
            // the page's first character spans every panel, the others a random contiguous run
            struct Run {
                int identity, first, last;
            };
            std::vector<Run> runs;
            for (int c = 0; c < cfg.characters_per_page; ++c) {
                const std::size_t k = static_cast<std::size_t>(p * cfg.characters_per_page + c);
                if (k >= cast.size())
                    break;
                if (c == 0) {
                    runs.push_back({cast[k], 0, cfg.panels_per_page - 1});
                } else {
                    std::uniform_int_distribution<int> len(2, cfg.panels_per_page);
                    const int l = len(rng);
                    std::uniform_int_distribution<int> start(0, cfg.panels_per_page - l);
                    const int f = start(rng);
                    runs.push_back({cast[k], f, f + l - 1});
                }
            }
            for (int panel = 0; panel < cfg.panels_per_page; ++panel) {
                const PanelLocator loc{series_id, page_id, std::to_string(panel + 1)};
                int char_index = 0, face_index = 0, body_index = 0;
                for (const auto& run : runs) {
                    if (panel < run.first || panel > run.last)
                        continue;
                    CharacterInstance inst;
                    inst.uuid = make_uuid(rng);
                    inst.char_index = char_index++;
                    inst.panel = loc;
                    const double u = unif(rng);
                    const bool has_face = u >= cfg.face_dropout;
                    const bool has_body = u < cfg.face_dropout || u >= cfg.face_dropout + cfg.body_dropout;

                    const std::int64_t bx = coord(rng), by = coord(rng);
                    const BBox body_box{bx, by, bx + 150 + coord(rng) / 4, by + 250 + coord(rng) / 4, 0.99};
                    const std::int64_t fw = std::max<std::int64_t>(20, body_box.width() / 3);
                    const BBox face_box{bx + (body_box.width() - fw) / 2, by + 5, bx + (body_box.width() - fw) / 2 + fw,
                                        by + 5 + fw, 0.98};
                    if (has_face) {
                        inst.face = Detection{PartKind::Face, face_box, face_index++, inst.char_index, loc};
                        ds.detections.push_back(*inst.face);
                    }
                    if (has_body) {
                        inst.body = Detection{PartKind::Body, body_box, body_index++, inst.char_index, loc};
                        ds.detections.push_back(*inst.body);
                    }

                    const VectorXd u_inst =
                        latent[static_cast<std::size_t>(run.identity)] + gaussian_vec(rng, L, cfg.instance_jitter / std::sqrt(static_cast<double>(L)));
                    const VectorXd face_noise = gaussian_vec(rng, F, cfg.feature_noise);
                    const VectorXd body_noise = gaussian_vec(rng, F, cfg.feature_noise);
                    auto& feat = ds.features[inst.uuid];
                    if (has_face)
                        feat.face = face_map * u_inst + face_style + face_noise;
                    if (has_body)
                        feat.body = body_map * u_inst + body_style + body_noise;
                    if (cfg.image_size > 0) {
                        if (has_face) {
                            const VectorXd col = sigmoid(face_colors * u_inst);
                            ds.face_images[inst.uuid] = render(col.head(3), col.tail(3), cfg.image_size, rng);
                        }
                        if (has_body) {
                            const VectorXd col = sigmoid(body_colors * u_inst);
                            ds.body_images[inst.uuid] = render(col.head(3), col.tail(3), cfg.image_size, rng);
                        }
                    }
                    ds.identity_of[inst.uuid] = "id" + two_digits(run.identity);
                    ds.instances.push_back(std::move(inst));
                }
            }
        }
    }

    ds.sequences = build_sequences(ds.instances, cfg.sequence_stride);
    for (auto& seq : ds.sequences) {
        std::map<std::string, std::size_t> slot;
        for (const auto& inst : seq.instances) {
            const auto& who = ds.identity_of.at(inst.uuid);
            auto [it, fresh] = slot.emplace(who, seq.annotations.size());
            if (fresh)
                seq.annotations.push_back({std::string(1, static_cast<char>('A' + it->second)), {}});
            seq.annotations[it->second].member_uuids.push_back(inst.uuid);
        }
    }
    return ds;
}

void write_images(const std::map<std::string, ImageBuffer>& faces, const std::map<std::string, ImageBuffer>& bodies,
                  const std::filesystem::path& path)
{
    std::ostringstream out;
    const auto emit = [&](const std::map<std::string, ImageBuffer>& m, const char* part) {
        for (const auto& [uuid, img] : m) {
            Json j{{"uuid", uuid}, {"part", part}, {"width", img.width}, {"height", img.height}, {"channels", 3}};
            j["data"] = img.data;
            out << j.dump() << '\n';
        }
    };
    emit(faces, "face");
    emit(bodies, "body");
    write_text_file(path, out.str());
}

void read_images(const std::filesystem::path& path, std::map<std::string, ImageBuffer>& faces,
                 std::map<std::string, ImageBuffer>& bodies)
{
    for_each_jsonl(path, [&](const Json& j) {
        ImageBuffer img;
        img.width = j.at("width").get<int>();
        img.height = j.at("height").get<int>();
        if (j.at("channels").get<int>() != 3)
            throw DataError("images must be RGB");
        img.data = j.at("data").get<std::vector<float>>();
        if (!img.valid())
            throw DataError("image data length does not match its dimensions");
        const auto part = j.at("part").get<std::string>();
        auto& target = part == "face" ? faces : bodies;
        if (!target.emplace(j.at("uuid").get<std::string>(), std::move(img)).second)
            throw DataError("repeated image record");
    });
}

void write_synthetic(const SynthDataset& ds, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_detections(ds.detections, dir / "detections.csv");
    write_instances(ds.instances, dir / "instances.jsonl");
    write_sequences(ds.sequences, dir / "sequences.jsonl");
    write_embeddings(records_from_features(ds.features), dir / "features.jsonl");
    std::ostringstream truth;
    for (const auto& [uuid, who] : ds.identity_of)
        truth << Json{{"uuid", uuid}, {"identity", who}}.dump() << '\n';
    write_text_file(dir / "truth.jsonl", truth.str());
    if (!ds.face_images.empty() || !ds.body_images.empty())
        write_images(ds.face_images, ds.body_images, dir / "images.jsonl");
}

std::map<std::string, std::string> read_truth(const std::filesystem::path& path)
{
    std::map<std::string, std::string> out;
    for_each_jsonl(path, [&](const Json& j) { out[j.at("uuid").get<std::string>()] = j.at("identity").get<std::string>(); });
    return out;
}

} // namespace comicreid
