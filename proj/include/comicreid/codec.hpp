#pragma once

// Record codecs. Detections use the comma-separated table layout
//   char_index,type,index,x_0,y_0,x_1,y_1,score,series_id,page_id
// where page_id carries "<page>_<panel>". Everything else is JSON Lines:
// one self-describing record per line.

#include "comicreid/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace comicreid {

using Json = nlohmann::json;

inline constexpr const char* kDetectionHeader = "char_index,type,index,x_0,y_0,x_1,y_1,score,series_id,page_id";

std::vector<Detection> read_detections(const std::filesystem::path& path);
std::vector<Detection> parse_detections(const std::string& text);
void write_detections(const std::vector<Detection>& dets, const std::filesystem::path& path);

Json to_json(const BBox& b);
Json to_json(const Detection& d);
Json to_json(const PanelLocator& p);
Json to_json(const CharacterInstance& inst);
Json to_json(const IdentityAnnotation& a);
Json to_json(const PanelSequence& seq);
Json to_json(const EmbeddingRecord& e);

BBox bbox_from_json(const Json& j);
Detection detection_from_json(const Json& j);
PanelLocator panel_from_json(const Json& j);
CharacterInstance instance_from_json(const Json& j);
IdentityAnnotation annotation_from_json(const Json& j);
PanelSequence sequence_from_json(const Json& j);
EmbeddingRecord embedding_from_json(const Json& j);

void write_instances(const std::vector<CharacterInstance>& instances, const std::filesystem::path& path);
/// Throws DataError on malformed lines or a repeated uuid.
std::vector<CharacterInstance> read_instances(const std::filesystem::path& path);

void write_sequences(const std::vector<PanelSequence>& seqs, const std::filesystem::path& path);
std::vector<PanelSequence> read_sequences(const std::filesystem::path& path);
std::string serialize_sequences(const std::vector<PanelSequence>& seqs);
std::vector<PanelSequence> parse_sequences(const std::string& text);

void write_embeddings(const std::vector<EmbeddingRecord>& embs, const std::filesystem::path& path);
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);

/// Reads a whole file; throws DataError naming the path when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Applies `fn` to every non-blank line of a JSONL file, with 1-based line numbers in errors.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn);

} // namespace comicreid

#include "comicreid/detail/jsonl.ipp"
