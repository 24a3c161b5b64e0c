#include "uqseg/review_service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include <httplib.h>

#include "uqseg/error.hpp"
#include "uqseg/pipeline.hpp"
#include "uqseg/raster_io.hpp"

namespace uqseg::review {

using nlohmann::json;

namespace {

const char* action_name(Action a) {
    switch (a) {
        case Action::accept: return "accept";
        case Action::override_value: return "override";
        case Action::reject: return "reject";
    }
    return "?";
}

Action action_from(const std::string& s) {
    if (s == "accept") return Action::accept;
    if (s == "override") return Action::override_value;
    if (s == "reject") return Action::reject;
    throw PreconditionError("action must be accept, override or reject");
}

Response error(int status, const std::string& message) { return {status, json{{"error", message}}}; }

constexpr const char* kLayers[] = {"image", "mask", "mean_prob", "total", "data", "model", "ekl", "variance"};

}  // namespace

analysis::DecisionStatus Decision::status() const {
    switch (action) {
        case Action::accept: return analysis::DecisionStatus::accepted;
        case Action::override_value: return analysis::DecisionStatus::overridden;
        case Action::reject: return analysis::DecisionStatus::rejected;
    }
    return analysis::DecisionStatus::pending;
}

bool Decision::same_content(const Decision& o) const {
    return case_id == o.case_id && action == o.action && value_mm == o.value_mm && note == o.note &&
           reviewer == o.reviewer;
}

json to_json(const Decision& d) {
    return json{{"case_id", d.case_id},
                {"action", action_name(d.action)},
                {"value_mm", d.value_mm ? json(*d.value_mm) : json(nullptr)},
                {"note", d.note},
                {"reviewer", d.reviewer},
                {"timestamp", d.timestamp}};
}

Decision decision_from_json(const json& j) {
    Decision d;
    d.case_id = j.at("case_id").get<std::string>();
    d.action = action_from(j.at("action").get<std::string>());
    if (j.contains("value_mm") && !j["value_mm"].is_null()) d.value_mm = j["value_mm"].get<double>();
    d.note = j.value("note", std::string());
    d.reviewer = j.value("reviewer", std::string());
    d.timestamp = j.value("timestamp", std::string());
    return d;
}

Decision parse_decision_body(const std::string& case_id, const json& body) {
    if (!body.is_object()) throw PreconditionError("decision body must be a JSON object");
    if (!body.contains("action") || !body["action"].is_string()) throw PreconditionError("missing action");
    Decision d;
    d.case_id = case_id;
    d.action = action_from(body["action"].get<std::string>());
    const bool has_value = body.contains("value_mm") && !body["value_mm"].is_null();
    if (d.action == Action::override_value) {
        if (!has_value) throw PreconditionError("override requires value_mm");
        if (!body["value_mm"].is_number()) throw PreconditionError("value_mm must be a number");
        const double v = body["value_mm"].get<double>();
        if (!std::isfinite(v) || !(v > 0.0)) throw PreconditionError("value_mm must be > 0");
        d.value_mm = v;
    } else if (has_value) {
        throw PreconditionError("value_mm is only allowed with override");
    }
    if (body.contains("note")) {
        if (!body["note"].is_string()) throw PreconditionError("note must be a string");
        d.note = body["note"].get<std::string>();
    }
    if (body.contains("reviewer")) {
        if (!body["reviewer"].is_string()) throw PreconditionError("reviewer must be a string");
        d.reviewer = body["reviewer"].get<std::string>();
    }
    return d;
}

std::string utc_timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t secs = std::chrono::system_clock::to_time_t(now);
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    ::gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

ReviewService::ReviewService(fs::path results_dir, fs::path decision_log)
    : results_dir_(std::move(results_dir)), log_path_(std::move(decision_log)) {
    for (auto& c : pipeline::load_results(results_dir_)) {
        const std::string id = c.record.meta.case_id;
        cases_.emplace(id, CaseEntry{std::move(c.record), std::move(c.dir)});
    }

    if (fs::exists(log_path_)) {
        std::ifstream in(log_path_);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                Decision d = decision_from_json(json::parse(line));
                active_[d.case_id] = d;
                log_.push_back(std::move(d));
            } catch (const std::exception&) {
                // A torn final line from a crash mid-append carries no committed decision.
                continue;
            }
        }
    } else if (log_path_.has_parent_path()) {
        fs::create_directories(log_path_.parent_path());
    }
}

void ReviewService::append_to_log(const Decision& d) {
    const std::string line = to_json(d).dump() + "\n";
    const int fd = ::open(log_path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw IoError("cannot open decision log " + log_path_.string());
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
        const ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            ::close(fd);
            throw IoError("write to decision log failed");
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    const int rc = ::fsync(fd);
    ::close(fd);
    if (rc != 0) throw IoError("fsync of decision log failed");
}

json ReviewService::decision_state(const std::string& case_id) const {
    const auto it = active_.find(case_id);
    if (it == active_.end()) return json{{"status", "pending"}};
    json j = to_json(it->second);
    j["status"] = analysis::to_string(it->second.status());
    return j;
}

json ReviewService::summary_json(const CaseEntry& c) const {
    const auto& r = c.record;
    const auto it = active_.find(r.meta.case_id);
    const auto status = it == active_.end() ? analysis::DecisionStatus::pending : it->second.status();
    return json{{"case_id", r.meta.case_id},
                {"modality", to_string(r.meta.modality)},
                {"method", to_string(r.method)},
                {"measurement_mm", r.measurement ? json(r.measurement->value_mm) : json(nullptr)},
                {"gt_measurement_mm", r.meta.gt_measurement_mm ? json(*r.meta.gt_measurement_mm) : json(nullptr)},
                {"uncertainty_score", r.uncertainty_score},
                {"ood_flag", r.ood_flag},
                {"flag", r.flag.empty() ? json(nullptr) : json(r.flag)},
                {"decision_status", analysis::to_string(status)}};
}

Response ReviewService::health() const { return {200, json{{"status", "ok"}}}; }

Response ReviewService::list_cases(const std::string& sort, const std::string& order,
                                   const std::string& status) const {
    const std::string key = sort.empty() ? "uncertainty" : sort;
    if (key != "uncertainty" && key != "case_id" && key != "measurement") {
        return error(400, "unknown sort key '" + sort + "'");
    }
    const std::string dir = order.empty() ? "desc" : order;
    if (dir != "asc" && dir != "desc") return error(400, "order must be asc or desc");
    std::optional<analysis::DecisionStatus> filter;
    if (!status.empty() && status != "all") {
        try {
            filter = analysis::decision_status_from_string(status);
        } catch (const PreconditionError& e) {
            return error(400, e.what());
        }
    }

    std::shared_lock lock(state_mutex_);
    std::vector<const CaseEntry*> rows;
    for (const auto& [id, c] : cases_) {
        if (filter) {
            const auto it = active_.find(id);
            const auto s = it == active_.end() ? analysis::DecisionStatus::pending : it->second.status();
            if (s != *filter) continue;
        }
        rows.push_back(&c);
    }
    auto value = [&](const CaseEntry* c) -> double {
        if (key == "uncertainty") return c->record.uncertainty_score;
        return c->record.measurement ? c->record.measurement->value_mm : -1.0;
    };
    const bool desc = dir == "desc";
    std::stable_sort(rows.begin(), rows.end(), [&](const CaseEntry* a, const CaseEntry* b) {
        if (key == "case_id") {
            return desc ? a->record.meta.case_id > b->record.meta.case_id
                        : a->record.meta.case_id < b->record.meta.case_id;
        }
        const double va = value(a), vb = value(b);
        if (va != vb) return desc ? va > vb : va < vb;
        return a->record.meta.case_id < b->record.meta.case_id;
    });

    json out = json::array();
    for (const CaseEntry* c : rows) out.push_back(summary_json(*c));
    return {200, out};
}

Response ReviewService::get_case(const std::string& case_id) const {
    const auto it = cases_.find(case_id);
    if (it == cases_.end()) return error(404, "unknown case '" + case_id + "'");
    json record;
    try {
        std::ifstream in(it->second.dir / "case.json");
        in >> record;
    } catch (const json::exception& e) {
        return error(500, std::string("unreadable case record: ") + e.what());
    }
    std::shared_lock lock(state_mutex_);
    record["decision"] = decision_state(case_id);
    return {200, record};
}

Response ReviewService::get_layer(const std::string& case_id, const std::string& layer) const {
    const auto it = cases_.find(case_id);
    if (it == cases_.end()) return error(404, "unknown case '" + case_id + "'");
    if (std::find(std::begin(kLayers), std::end(kLayers), layer) == std::end(kLayers)) {
        return error(404, "unknown layer '" + layer + "'");
    }
    const auto file = it->second.record.file(layer);
    if (!file) return error(404, "case has no layer '" + layer + "'");
    const fs::path path = it->second.dir / *file;

    std::vector<double> values;
    int w = 0, h = 0;
    try {
        if (layer == "image") {
            const Raster r = io::load_image(path).image;
            values.assign(r.values().begin(), r.values().end());
            w = r.width();
            h = r.height();
        } else if (layer == "mask") {
            const BinaryMask m = io::load_mask(path);
            for (std::size_t i = 0; i < m.size(); ++i) values.push_back(m[i] ? 1.0 : 0.0);
            w = m.width();
            h = m.height();
        } else {
            const Raster r = io::load_float_map(
                path, layer == "mean_prob" ? ValueKind::probability : ValueKind::uncertainty);
            values.assign(r.values().begin(), r.values().end());
            w = r.width();
            h = r.height();
        }
    } catch (const Error& e) {
        return error(500, e.what());
    }
    return {200, json{{"width", w}, {"height", h}, {"values", values}}};
}

Response ReviewService::post_decision(const std::string& case_id, const std::string& body) {
    if (!cases_.contains(case_id)) return error(404, "unknown case '" + case_id + "'");
    Decision d;
    try {
        d = parse_decision_body(case_id, json::parse(body));
    } catch (const json::exception& e) {
        return error(400, std::string("invalid JSON: ") + e.what());
    } catch (const PreconditionError& e) {
        return error(400, e.what());
    }

    std::unique_lock lock(state_mutex_);
    const auto it = active_.find(case_id);
    if (it == active_.end() || !it->second.same_content(d)) {
        d.timestamp = utc_timestamp_now();
        try {
            append_to_log(d);
        } catch (const IoError& e) {
            return error(500, e.what());
        }
        active_[case_id] = d;
        log_.push_back(d);
    }
    return {200, json{{"case_id", case_id}, {"decision", decision_state(case_id)}}};
}

Response ReviewService::decisions() const {
    std::shared_lock lock(state_mutex_);
    std::vector<Decision> sorted = log_;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Decision& a, const Decision& b) { return a.timestamp < b.timestamp; });
    json out = json::array();
    for (const Decision& d : sorted) out.push_back(to_json(d));
    return {200, out};
}

std::optional<analysis::DecisionStatus> ReviewService::status_of(const std::string& case_id) const {
    if (!cases_.contains(case_id)) return std::nullopt;
    std::shared_lock lock(state_mutex_);
    const auto it = active_.find(case_id);
    return it == active_.end() ? analysis::DecisionStatus::pending : it->second.status();
}

void ReviewService::bind(httplib::Server& server, const std::optional<fs::path>& ui_dir) {
    auto send = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };

    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    server.Get("/api/cases", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, list_cases(req.get_param_value("sort"), req.get_param_value("order"), req.get_param_value("status")));
    });
    server.Get(R"(/api/cases/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, get_case(req.matches[1]));
    });
    server.Get(R"(/api/cases/([^/]+)/layers/([^/]+))",
               [this, send](const httplib::Request& req, httplib::Response& res) {
                   send(res, get_layer(req.matches[1], req.matches[2]));
               });
    server.Post(R"(/api/cases/([^/]+)/decision)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, post_decision(req.matches[1], req.body));
    });
    server.Get("/api/decisions", [this, send](const httplib::Request&, httplib::Response& res) {
        send(res, decisions());
    });

    if (ui_dir && fs::is_directory(*ui_dir)) server.set_mount_point("/", ui_dir->string());
}

}  // namespace uqseg::review
