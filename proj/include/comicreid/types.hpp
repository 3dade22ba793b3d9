#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace comicreid {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;
using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

using Rng = std::mt19937_64;

/// Raised when input data violates a documented invariant (bad rows, unknown ids, ...).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an optimisation produces a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BBox {
    std::int64_t x0 = 0;
    std::int64_t y0 = 0;
    std::int64_t x1 = 0;
    std::int64_t y1 = 0;
    double score = 1.0;

    std::int64_t width() const { return x1 - x0; }
    std::int64_t height() const { return y1 - y0; }
    std::int64_t area() const { return width() * height(); }
    bool valid() const { return x0 < x1 && y0 < y1 && score >= 0.0 && score <= 1.0; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Area of the intersection of two boxes, 0 when disjoint.
inline std::int64_t intersection_area(const BBox& a, const BBox& b)
{
    const std::int64_t w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const std::int64_t h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    return (w > 0 && h > 0) ? w * h : 0;
}

enum class PartKind { Face, Body };

std::string to_string(PartKind kind);
PartKind part_kind_from_string(const std::string& s);

struct PanelLocator {
    std::string series_id;
    std::string page_id;
    std::string panel_id;

    friend bool operator==(const PanelLocator&, const PanelLocator&) = default;
    friend auto operator<=>(const PanelLocator&, const PanelLocator&) = default;
};

struct Detection {
    PartKind kind = PartKind::Face;
    BBox bbox;
    int index = 0;       // per-panel ordinal within kind
    int char_index = -1; // as printed by an upstream pairing step, -1 if absent
    PanelLocator panel;

    friend bool operator==(const Detection&, const Detection&) = default;
};

struct CharacterInstance {
    std::string uuid;
    int char_index = 0;
    std::optional<Detection> face;
    std::optional<Detection> body;
    PanelLocator panel;

    bool has_face() const { return face.has_value(); }
    bool has_body() const { return body.has_value(); }

    friend bool operator==(const CharacterInstance&, const CharacterInstance&) = default;
};

struct IdentityAnnotation {
    std::string identity_id;
    std::vector<std::string> member_uuids;

    friend bool operator==(const IdentityAnnotation&, const IdentityAnnotation&) = default;
};

struct PanelSequence {
    std::string sequence_id;
    std::vector<PanelLocator> panels; // exactly 4, in reading order
    std::vector<CharacterInstance> instances;
    std::vector<IdentityAnnotation> annotations;

    const std::string& series_id() const { return panels.front().series_id; }

    friend bool operator==(const PanelSequence&, const PanelSequence&) = default;
};

enum class EmbeddingRole { Backbone, Projection, Identity };

std::string to_string(EmbeddingRole role);
EmbeddingRole embedding_role_from_string(const std::string& s);

/// Which part of a character an embedding was computed from.
enum class EmbeddingPart { Face, Body, Fused };

std::string to_string(EmbeddingPart part);
EmbeddingPart embedding_part_from_string(const std::string& s);

struct EmbeddingRecord {
    std::string uuid;
    EmbeddingPart part = EmbeddingPart::Fused;
    EmbeddingRole role = EmbeddingRole::Backbone;
    VectorXd values;

    friend bool operator==(const EmbeddingRecord& a, const EmbeddingRecord& b)
    {
        return a.uuid == b.uuid && a.part == b.part && a.role == b.role && a.values.size() == b.values.size() &&
               a.values == b.values;
    }
};

/// Checks the per-role invariants of an embedding (finite, unit norm for identity embeddings).
void validate_embedding(const EmbeddingRecord& rec);

/// Validates a sequence: 4 panels, unique uuids, disjoint non-empty annotations over known instances.
void validate_sequence(const PanelSequence& seq);

/// 128-bit random identifier in canonical 8-4-4-4-12 hex form (version 4 layout).
std::string make_uuid(Rng& rng);

} // namespace comicreid
