#include "comicreid/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace comicreid {

void PairingConfig::validate() const
{
    if (min_bbox_area <= 0)
        throw DataError("min_bbox_area must be positive");
    if (min_score < 0.0 || min_score > 1.0 || min_overlap_ratio < 0.0 || min_overlap_ratio > 1.0)
        throw DataError("score and overlap thresholds must lie in [0,1]");
    if (!(face_scale > 0.0))
        throw DataError("face_scale must be positive");
}

std::vector<Detection> filter_detections(const std::vector<Detection>& dets, const PairingConfig& cfg)
{
    std::vector<Detection> out;
    std::copy_if(dets.begin(), dets.end(), std::back_inserter(out), [&](const Detection& d) {
        return d.bbox.area() >= cfg.min_bbox_area && d.bbox.score >= cfg.min_score;
    });
    return out;
}

std::vector<CharacterInstance> pair_face_body(const std::vector<Detection>& faces,
                                              const std::vector<Detection>& bodies, const PairingConfig& cfg,
                                              Rng& rng)
{
    struct Candidate {
        std::int64_t gap;
        std::size_t face;
        std::size_t body;
    };
    std::vector<Candidate> cands;
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const double face_area = static_cast<double>(faces[f].bbox.area());
        for (std::size_t b = 0; b < bodies.size(); ++b) {
            const double ratio = static_cast<double>(intersection_area(faces[f].bbox, bodies[b].bbox)) / face_area;
            if (ratio > cfg.min_overlap_ratio)
                cands.push_back({std::abs(faces[f].bbox.y0 - bodies[b].bbox.y0), f, b});
        }
    }
    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
        return std::tie(a.gap, faces[a.face].index, bodies[a.body].index) <
               std::tie(b.gap, faces[b.face].index, bodies[b.body].index);
    });

    std::vector<int> face_to_body(faces.size(), -1);
    std::vector<bool> body_used(bodies.size(), false);
    for (const auto& c : cands) {
        if (face_to_body[c.face] >= 0 || body_used[c.body])
            continue;
        face_to_body[c.face] = static_cast<int>(c.body);
        body_used[c.body] = true;
    }

    std::vector<std::size_t> face_order(faces.size());
    std::iota(face_order.begin(), face_order.end(), 0);
    std::sort(face_order.begin(), face_order.end(),
              [&](std::size_t a, std::size_t b) { return faces[a].index < faces[b].index; });
    std::vector<std::size_t> body_order(bodies.size());
    std::iota(body_order.begin(), body_order.end(), 0);
    std::sort(body_order.begin(), body_order.end(),
              [&](std::size_t a, std::size_t b) { return bodies[a].index < bodies[b].index; });

    std::vector<CharacterInstance> out;
    for (std::size_t f : face_order) {
        CharacterInstance inst;
        inst.uuid = make_uuid(rng);
        inst.char_index = static_cast<int>(out.size());
        inst.face = faces[f];
        inst.panel = faces[f].panel;
        if (face_to_body[f] >= 0)
            inst.body = bodies[static_cast<std::size_t>(face_to_body[f])];
        out.push_back(std::move(inst));
    }
    for (std::size_t b : body_order) {
        if (body_used[b])
            continue;
        CharacterInstance inst;
        inst.uuid = make_uuid(rng);
        inst.char_index = static_cast<int>(out.size());
        inst.body = bodies[b];
        inst.panel = bodies[b].panel;
        out.push_back(std::move(inst));
    }
    for (auto& inst : out) {
        if (inst.face)
            inst.face->char_index = inst.char_index;
        if (inst.body)
            inst.body->char_index = inst.char_index;
    }
    return out;
}

std::vector<CharacterInstance> build_instances(const std::vector<Detection>& dets, const PairingConfig& cfg,
                                               Rng& rng)
{
    std::map<PanelLocator, std::pair<std::vector<Detection>, std::vector<Detection>>> panels;
    for (const auto& d : dets) {
        auto& slot = panels[d.panel];
        (d.kind == PartKind::Face ? slot.first : slot.second).push_back(d);
    }
    std::vector<CharacterInstance> out;
    for (const auto& [panel, parts] : panels) {
        auto insts = pair_face_body(parts.first, parts.second, cfg, rng);
        out.insert(out.end(), std::make_move_iterator(insts.begin()), std::make_move_iterator(insts.end()));
    }
    return out;
}

BBox face_square_crop_box(const BBox& face, double scale, std::int64_t image_w, std::int64_t image_h)
{
    if (!face.valid())
        throw DataError("degenerate face box");
    if (!(scale > 0.0) || image_w <= 0 || image_h <= 0)
        throw DataError("scale and image size must be positive");

    const auto longest = std::max(face.width(), face.height());
    std::int64_t side = static_cast<std::int64_t>(std::llround(scale * static_cast<double>(longest)));
    side = std::max<std::int64_t>(1, std::min({side, image_w, image_h}));

    const auto place = [side](std::int64_t lo, std::int64_t hi, std::int64_t extent) {
        const double centre = 0.5 * static_cast<double>(lo + hi);
        auto start = static_cast<std::int64_t>(std::floor(centre - 0.5 * static_cast<double>(side) + 0.5));
        start = std::clamp<std::int64_t>(start, 0, extent - side);
        return start;
    };
    const auto x0 = place(face.x0, face.x1, image_w);
    const auto y0 = place(face.y0, face.y1, image_h);
    return BBox{x0, y0, x0 + side, y0 + side, face.score};
}

namespace {

// Numeric-aware ordering so that panel "10" follows panel "9".
bool natural_less(const std::string& a, const std::string& b)
{
    const bool an = !a.empty() && std::all_of(a.begin(), a.end(), ::isdigit);
    const bool bn = !b.empty() && std::all_of(b.begin(), b.end(), ::isdigit);
    if (an && bn)
        return a.size() != b.size() ? a.size() < b.size() : a < b;
    return a < b;
}

} // namespace

std::vector<PanelSequence> build_sequences(const std::vector<CharacterInstance>& instances, int stride)
{
    if (stride < 1)
        throw DataError("sequence stride must be positive");
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> page_panels;
    std::map<PanelLocator, std::vector<const CharacterInstance*>> by_panel;
    for (const auto& inst : instances) {
        auto& panels = page_panels[{inst.panel.series_id, inst.panel.page_id}];
        if (std::find(panels.begin(), panels.end(), inst.panel.panel_id) == panels.end())
            panels.push_back(inst.panel.panel_id);
        by_panel[inst.panel].push_back(&inst);
    }
    std::vector<PanelSequence> out;
    for (auto& [page, panels] : page_panels) {
        std::sort(panels.begin(), panels.end(), natural_less);
        for (std::size_t start = 0; start + 4 <= panels.size(); start += static_cast<std::size_t>(stride)) {
            PanelSequence seq;
            seq.sequence_id = page.first + "_" + page.second + "_" + panels[start];
            for (std::size_t k = 0; k < 4; ++k) {
                PanelLocator loc{page.first, page.second, panels[start + k]};
                seq.panels.push_back(loc);
                for (const auto* inst : by_panel[loc])
                    seq.instances.push_back(*inst);
            }
            out.push_back(std::move(seq));
        }
    }
    return out;
}

void SplitConfig::validate() const
{
    if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0)
        throw DataError("val_fraction and test_fraction must be non-negative with sum < 1");
}

std::string to_string(Split s)
{
    switch (s) {
    case Split::Train:
        return "train";
    case Split::Val:
        return "val";
    case Split::Test:
        return "test";
    }
    return "train";
}

SplitResult split_sequences(const std::vector<PanelSequence>& sequences, const SplitConfig& cfg)
{
    cfg.validate();
    if (cfg.sequence_threshold > sequences.size())
        throw DataError("sequence threshold " + std::to_string(cfg.sequence_threshold) + " exceeds the " +
                        std::to_string(sequences.size()) + " available sequences");

    std::map<std::string, std::size_t> counts;
    for (const auto& s : sequences) {
        if (s.panels.empty() || s.series_id().empty())
            throw DataError("sequence " + s.sequence_id + " has no series id");
        ++counts[s.series_id()];
    }
    std::vector<std::pair<std::size_t, std::string>> order;
    for (const auto& [series, n] : counts)
        order.emplace_back(n, series);
    std::sort(order.begin(), order.end());

    SplitResult res;
    std::size_t cumulative = 0;
    for (const auto& [n, series] : order) {
        if (cumulative >= cfg.sequence_threshold)
            break;
        res.pool_series.push_back(series);
        cumulative += n;
    }
    for (const auto& [series, n] : counts)
        res.series_split[series] = Split::Train;

    std::vector<std::string> pool = res.pool_series;
    Rng rng(cfg.seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    const double val_target = cfg.val_fraction * static_cast<double>(cumulative);
    const double test_target = cfg.test_fraction * static_cast<double>(cumulative);
    std::size_t val_n = 0;
    std::size_t test_n = 0;
    for (const auto& series : pool) {
        if (static_cast<double>(val_n) < val_target) {
            res.series_split[series] = Split::Val;
            val_n += counts[series];
        } else if (static_cast<double>(test_n) < test_target) {
            res.series_split[series] = Split::Test;
            test_n += counts[series];
        }
    }
    for (const auto& s : sequences) {
        switch (res.series_split.at(s.series_id())) {
        case Split::Train:
            res.train.push_back(s);
            break;
        case Split::Val:
            res.val.push_back(s);
            break;
        case Split::Test:
            res.test.push_back(s);
            break;
        }
    }
    return res;
}

} // namespace comicreid
