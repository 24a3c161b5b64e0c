#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "uqseg/analysis.hpp"

namespace httplib {
class Server;
}

namespace uqseg::review {

namespace fs = std::filesystem;

enum class Action { accept, override_value, reject };

/// One reviewer decision as stored in the append-only log.
struct Decision {
    std::string case_id;
    Action action = Action::accept;
    std::optional<double> value_mm;  // present iff override
    std::string note;
    std::string reviewer;
    std::string timestamp;  // UTC ISO-8601

    analysis::DecisionStatus status() const;
    /// Same reviewer intent, ignoring the timestamp.
    bool same_content(const Decision& other) const;
};

nlohmann::json to_json(const Decision& d);
Decision decision_from_json(const nlohmann::json& j);

/// Validates a POST body. Throws PreconditionError with a client-facing message.
Decision parse_decision_body(const std::string& case_id, const nlohmann::json& body);

std::string utc_timestamp_now();

/// HTTP status plus JSON body, independent of the transport.
struct Response {
    int status = 200;
    nlohmann::json body;
};

/// Case index over a results directory plus the decision log. Pipeline outputs
/// are only read; the log is the single writable artifact.
class ReviewService {
public:
    /// Loads every case record and replays the decision log (latest per case wins).
    ReviewService(fs::path results_dir, fs::path decision_log);

    Response health() const;
    Response list_cases(const std::string& sort, const std::string& order, const std::string& status) const;
    Response get_case(const std::string& case_id) const;
    Response get_layer(const std::string& case_id, const std::string& layer) const;
    Response post_decision(const std::string& case_id, const std::string& body);
    Response decisions() const;

    /// Effective status of one case (pending without a decision).
    std::optional<analysis::DecisionStatus> status_of(const std::string& case_id) const;
    std::size_t case_count() const { return cases_.size(); }

    /// Registers the API routes (and CORS) on an httplib server. When `ui_dir`
    /// is a directory it is served at `/`.
    void bind(httplib::Server& server, const std::optional<fs::path>& ui_dir = std::nullopt);

private:
    struct CaseEntry {
        analysis::CaseRecord record;
        fs::path dir;
    };

    void append_to_log(const Decision& d);
    nlohmann::json summary_json(const CaseEntry& c) const;
    nlohmann::json decision_state(const std::string& case_id) const;

    fs::path results_dir_;
    fs::path log_path_;
    std::map<std::string, CaseEntry> cases_;

    mutable std::shared_mutex state_mutex_;
    std::map<std::string, Decision> active_;
    std::vector<Decision> log_;
};

}  // namespace uqseg::review
