#pragma once

// Annotation backend: sequence browsing, identity commits with optimistic concurrency, export,
// and clustering suggestions. State is an append-only event log plus periodic snapshots.

#include "comicreid/cluster.hpp"
#include "comicreid/codec.hpp"
#include "comicreid/trainer.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace comicreid {

enum class AnnotationMode { SingleCharacter, MultipleCharacter };

std::string to_string(AnnotationMode m);
AnnotationMode annotation_mode_from_string(const std::string& s);

struct SequenceState {
    PanelSequence sequence;
    AnnotationMode mode = AnnotationMode::MultipleCharacter;
    bool complete = false;
    long revision = 0;
    long next_identity = 1;
};

struct CommitRequest {
    std::vector<std::string> uuids;
    AnnotationMode mode = AnnotationMode::MultipleCharacter;
    long expected_revision = 0;
    bool reassign = false;
    std::string annotator;
};

struct CommitResult {
    int status = 200; // 200, 404, 409 or 422
    long revision = 0;
    std::string identity_id;
    std::string message;
};

struct SequencePage {
    std::vector<SequenceState> items;
    std::optional<std::string> next_cursor;
};

class AnnotationStore {
public:
    /// Loads the latest snapshot in state_dir (when present) and replays the event log after it.
    /// Sequences from the dataset that the snapshot does not know start unannotated at revision 0,
    /// keeping any annotations they already carry.
    AnnotationStore(std::vector<PanelSequence> dataset, std::filesystem::path state_dir, std::size_t snapshot_every = 50);

    /// Sequences with id greater than cursor, in id order.
    SequencePage page(const std::string& cursor, std::size_t limit) const;
    std::optional<SequenceState> get(const std::string& id) const;

    CommitResult commit(const std::string& id, const CommitRequest& req);
    CommitResult complete(const std::string& id, long expected_revision, const std::string& annotator);

    /// Every sequence with its current annotations, in the sequence record format.
    std::string export_text() const;

    std::size_t size() const;
    long events() const;

private:
    CommitResult apply_commit(SequenceState& st, const CommitRequest& req);
    void append_event(const Json& ev);
    void write_snapshot();
    void replay(const Json& ev);

    mutable std::mutex mu_;
    std::map<std::string, SequenceState> states_;
    std::filesystem::path state_dir_;
    std::size_t snapshot_every_;
    long event_seq_ = 0;
    std::size_t since_snapshot_ = 0;
};

/// Optional model used for suggestions.
struct SuggestionModel {
    FeatureTable features;
    Projector<double> projector;
    ClusterConfig cluster;
    std::string hash; // identifies features + projector + threshold
};

SuggestionModel load_suggestion_model(const std::filesystem::path& features, const std::filesystem::path& projector,
                                      const ClusterConfig& cluster);

struct ServiceConfig {
    std::filesystem::path sequences;  // sequences.jsonl
    std::filesystem::path state_dir;  // event log and snapshots
    std::filesystem::path static_dir; // panel images and UI bundle, optional
    std::optional<std::filesystem::path> features;
    std::optional<std::filesystem::path> projector;
    ClusterConfig cluster;
    std::size_t snapshot_every = 50;
    std::size_t page_size = 50;
};

class AnnotatorService {
public:
    explicit AnnotatorService(const ServiceConfig& cfg);
    ~AnnotatorService();
    AnnotatorService(const AnnotatorService&) = delete;
    AnnotatorService& operator=(const AnnotatorService&) = delete;

    /// Binds to host:port (0 = any free port) and returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); blocking.
    void run();
    void stop();

    AnnotationStore& store() { return *store_; }

    /// Suggestion labels of a sequence, cached per (sequence, model hash); nullopt without a model.
    std::optional<std::map<std::string, int>> suggestions(const SequenceState& st);

private:
    void routes();

    ServiceConfig cfg_;
    std::unique_ptr<AnnotationStore> store_;
    std::optional<SuggestionModel> model_;
    std::mutex cache_mu_;
    std::map<std::pair<std::string, std::string>, std::map<std::string, int>> cache_; // (sequence, model hash)
    std::unique_ptr<httplib::Server> server_;
};

} // namespace comicreid
