#include "cm/api.hpp"
#include "cm/error.hpp"
#include "cm/event_store.hpp"
#include "cm/harness.hpp"
#include "cm/json_fields.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace cm::harness {

namespace {

using Clock = std::chrono::steady_clock;

const std::string kAdmin(api::kAdminPrincipal);

[[noreturn]] void parse_error(std::size_t line, const std::string& msg) {
    fail(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + msg);
}

/// Which command field names the acting participant.
std::optional<std::string> actor_slot(const std::string& cmd) {
    static const std::map<std::string, std::string> slots{{"notify", "sender"}, {"approve", "expert"},
                                                          {"task", "creator"},  {"change_task", "editor"},
                                                          {"report", "patient"}, {"goal", "patient"},
                                                          {"ack", "mailbox"}};
    static const std::set<std::string> admin{"register", "circle", "join", "register_type"};
    if (auto it = slots.find(cmd); it != slots.end()) return it->second;
    if (admin.contains(cmd)) return std::nullopt;
    fail(ErrorCode::ParseError, "unknown command '" + cmd + "'");
}

std::optional<std::string> subset_diff(const Json& expected, const Json& actual, const std::string& path) {
    if (expected.is_object()) {
        if (!actual.is_object()) return path + ": expected an object, got " + actual.dump();
        for (const auto& [k, v] : expected.items()) {
            if (!actual.contains(k)) return path + "." + k + ": missing";
            if (auto d = subset_diff(v, actual.at(k), path + "." + k)) return d;
        }
        return std::nullopt;
    }
    if (expected.is_array()) {
        if (!actual.is_array()) return path + ": expected an array, got " + actual.dump();
        if (expected.size() != actual.size()) {
            return path + ": expected " + std::to_string(expected.size()) + " entries, got " +
                   std::to_string(actual.size());
        }
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (auto d = subset_diff(expected[i], actual[i], path + "[" + std::to_string(i) + "]")) return d;
        }
        return std::nullopt;
    }
    if (expected != actual) return path + ": expected " + expected.dump() + ", got " + actual.dump();
    return std::nullopt;
}

class Runner {
public:
    Runner(const Scenario& s, Target& t) : s_(s), t_(t) {}

    ScenarioReport run() {
        const auto start = Clock::now();
        report_.name = s_.name;
        setup();
        for (const auto& m : s_.cast) streams_[ids_.at(m.name)].reader = t_.open_stream(ids_.at(m.name), 0);
        for (std::size_t i = 0; i < s_.steps.size(); ++i) {
            step(s_.steps[i]);
            drain(std::chrono::milliseconds(0));
        }
        audit_streams();
        const auto events = t_.events();
        for (const auto& e : events) report_.digest_lines.push_back(digest_line(e));
        report_.digest = log_digest(events);
        check_golden();
        report_.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        return std::move(report_);
    }

private:
    struct Follower {
        std::unique_ptr<StreamReader> reader;
        std::vector<std::uint64_t> seqs;
        std::uint64_t last = 0;
    };

    StepReport& begin(std::size_t line, std::string what) {
        auto& r = report_.steps.emplace_back();
        r.index = report_.steps.size();
        r.line = line;
        r.what = std::move(what);
        return r;
    }

    void setup() {
        t_.set_tick(0);
        for (const auto& m : s_.cast) {
            auto& r = begin(0, "setup register " + m.name);
            try {
                auto out = t_.execute(RegisterParticipant{m.role, m.domain, m.name});
                labels_[m.name] = out;
                ids_[m.name] = out.at("id").get<std::string>();
                r.outcome = "ok " + ids_[m.name];
            } catch (const Error& e) {
                r.outcome = "error:" + std::string(to_string(e.code()));
                r.passed = false;
                r.diff = e.what();
                fail(ErrorCode::ExpectationFailed, "setup failed: " + r.diff);
            }
        }
        for (const auto& c : s_.circles) {
            auto& r = begin(0, "setup circle " + c.name);
            std::set<ParticipantId> experts, patients;
            for (const auto& n : c.experts) experts.insert(ids_.at(n));
            for (const auto& n : c.patients) patients.insert(ids_.at(n));
            try {
                auto out = t_.execute(CreateCircle{experts, patients});
                labels_[c.name] = out;
                r.outcome = "ok " + out.at("id").get<std::string>();
            } catch (const Error& e) {
                r.outcome = "error:" + std::string(to_string(e.code()));
                r.passed = false;
                r.diff = e.what();
                fail(ErrorCode::ExpectationFailed, "setup failed: " + r.diff);
            }
        }
    }

    Json resolve_ref(const std::string& ref) const {
        const auto dot = ref.find('.');
        const auto name = ref.substr(1, dot == std::string::npos ? std::string::npos : dot - 1);
        auto it = labels_.find(name);
        if (it == labels_.end()) fail(ErrorCode::ExpectationFailed, "unknown reference " + ref);
        const Json& v = it->second;
        if (dot != std::string::npos) {
            const auto field = ref.substr(dot + 1);
            if (!v.contains(field)) fail(ErrorCode::ExpectationFailed, "reference " + ref + " has no such field");
            return v.at(field);
        }
        if (v.contains("notification_id")) return v.at("notification_id");
        if (v.contains("id")) return v.at("id");
        fail(ErrorCode::ExpectationFailed, "reference " + ref + " names no id");
    }

    Json resolve(const Json& j) const {
        if (j.is_string()) {
            const auto& s = j.get_ref<const std::string&>();
            if (s.rfind("$$", 0) == 0) return s.substr(1);
            if (!s.empty() && s[0] == '$') return resolve_ref(s);
            return j;
        }
        if (j.is_object()) {
            Json out = Json::object();
            for (const auto& [k, v] : j.items()) out[k] = resolve(v);
            return out;
        }
        if (j.is_array()) {
            Json out = Json::array();
            for (const auto& v : j) out.push_back(resolve(v));
            return out;
        }
        return j;
    }

    std::string who(const std::string& ref) const {
        if (auto it = ids_.find(ref); it != ids_.end()) return it->second;
        return resolve(Json(ref)).get<std::string>();
    }

    void step(const Step& st) {
        t_.set_tick(st.tick);
        switch (st.kind) {
        case Step::Kind::Command:
            return command(st);
        case Step::Kind::ExpectMailbox:
            return expect_mailbox(st);
        case Step::Kind::ExpectNotification:
            return expect_notification(st);
        case Step::Kind::Fault:
            return fault(st);
        }
    }

    void command(const Step& st) {
        auto& r = begin(st.line, st.actor + " " + st.cmd);
        std::optional<Json> result;
        std::optional<ErrorCode> error;
        std::string error_text;
        try {
            Json j = resolve(st.args);
            j["cmd"] = st.cmd;
            if (auto slot = actor_slot(st.cmd)) j[*slot] = ids_.at(st.actor);
            const Command c = command_from_json(j);
            try {
                result = t_.execute(c);
            } catch (const Error& e) {
                error = e.code();
                error_text = e.what();
            }
        } catch (const Error& e) {
            r.outcome = "invalid";
            r.passed = false;
            r.diff = e.what();
            return;
        }

        const Json expect = st.expect.is_null() ? Json::object() : st.expect;
        if (error) {
            r.outcome = "error:" + std::string(to_string(*error));
            const auto wanted = expect.value("error", "");
            if (wanted != to_string(*error)) {
                r.passed = false;
                r.diff = wanted.empty() ? "unexpected error: " + error_text
                                        : "expected error " + wanted + ", got " + std::string(to_string(*error));
            }
            return;
        }
        r.outcome = "ok";
        if (st.label) labels_[*st.label] = *result;
        if (expect.contains("error")) {
            r.passed = false;
            r.diff = "expected error " + expect["error"].get<std::string>() + ", got ok";
            return;
        }
        if (expect.contains("result")) {
            try {
                if (auto d = subset_diff(resolve(expect["result"]), *result, "result")) {
                    r.passed = false;
                    r.diff = *d;
                }
            } catch (const Error& e) {
                r.passed = false;
                r.diff = e.what();
            }
        }
    }

    void expect_mailbox(const Step& st) {
        auto& r = begin(st.line, "expect_mailbox " + st.target);
        try {
            Json list = Json::array();
            for (const auto& d : t_.mailbox(who(st.target))) list.push_back(d);
            r.outcome = std::to_string(list.size()) + " deliveries";
            if (st.expect.contains("count") && st.expect["count"].get<std::size_t>() != list.size()) {
                r.passed = false;
                r.diff = "expected " + st.expect["count"].dump() + " deliveries, got " + std::to_string(list.size());
                return;
            }
            if (st.expect.contains("deliveries")) {
                if (auto d = subset_diff(resolve(st.expect["deliveries"]), list, "deliveries")) {
                    r.passed = false;
                    r.diff = *d;
                }
            }
        } catch (const Error& e) {
            r.outcome = "error:" + std::string(to_string(e.code()));
            r.passed = false;
            r.diff = e.what();
        }
    }

    void expect_notification(const Step& st) {
        auto& r = begin(st.line, "expect_notification " + st.target);
        try {
            const auto view = t_.notification(resolve(Json(st.target)).get<std::string>());
            r.outcome = view["notification"]["state"].get<std::string>();
            Json expected = Json::object();
            if (st.expect.contains("state")) expected["notification"]["state"] = st.expect["state"];
            if (st.expect.contains("outcome")) expected["session"]["outcome"] = st.expect["outcome"];
            if (auto d = subset_diff(expected, view, "")) {
                r.passed = false;
                r.diff = *d;
            }
        } catch (const Error& e) {
            r.outcome = "error:" + std::string(to_string(e.code()));
            r.passed = false;
            r.diff = e.what();
        }
    }

    void fault(const Step& st) {
        auto& r = begin(st.line, "fault " + st.fault + " " + st.actor);
        auto& f = streams_.at(ids_.at(st.actor));
        if (st.fault == "drop") {
            f.reader.reset();
            r.outcome = "dropped at seq " + std::to_string(f.last);
        } else {
            if (!f.reader) f.reader = t_.open_stream(ids_.at(st.actor), f.last);
            r.outcome = "resumed after seq " + std::to_string(f.last);
        }
    }

    void take(Follower& f, const Delivery& d) {
        if (d.seq <= f.last) return;
        f.seqs.push_back(d.seq);
        f.last = d.seq;
    }

    void drain(std::chrono::milliseconds wait) {
        for (auto& [id, f] : streams_) {
            if (!f.reader) continue;
            while (auto d = f.reader->next(wait)) take(f, *d);
        }
    }

    void audit_streams() {
        const auto deadline = Clock::now() + std::chrono::seconds(5);
        for (auto& [id, f] : streams_) {
            const auto box = t_.mailbox(id);
            const std::uint64_t head = box.empty() ? 0 : box.back().seq;
            while (f.last < head && Clock::now() < deadline) {
                if (!f.reader || f.reader->ended()) f.reader = t_.open_stream(id, f.last);
                if (auto d = f.reader->next(std::chrono::milliseconds(100))) take(f, *d);
            }
            std::vector<std::uint64_t> expected;
            for (const auto& d : box) expected.push_back(d.seq);
            if (f.seqs != expected && report_.streams_matched) {
                report_.streams_matched = false;
                report_.stream_diff = id + ": received " + std::to_string(f.seqs.size()) + " of " +
                                      std::to_string(expected.size()) + " deliveries";
            }
            f.reader.reset();
        }
    }

    void check_golden() {
        if (!s_.golden) return;
        report_.golden_checked = true;
        std::ifstream in(*s_.golden);
        if (!in) {
            report_.golden_matched = false;
            report_.golden_diff = "cannot read " + s_.golden->string();
            return;
        }
        std::vector<std::string> want;
        for (std::string line; std::getline(in, line);) {
            if (!line.empty()) want.push_back(line);
        }
        const auto& got = report_.digest_lines;
        for (std::size_t i = 0; i < std::max(want.size(), got.size()); ++i) {
            const std::string w = i < want.size() ? want[i] : "<end of golden>";
            const std::string g = i < got.size() ? got[i] : "<end of log>";
            if (w != g) {
                report_.golden_matched = false;
                report_.golden_diff = "event " + std::to_string(i + 1) + ":\n  golden: " + w + "\n  actual: " + g;
                return;
            }
        }
    }

    const Scenario& s_;
    Target& t_;
    ScenarioReport report_;
    std::map<std::string, Json> labels_;
    std::map<std::string, ParticipantId> ids_;
    std::map<ParticipantId, Follower> streams_;
};

Step parse_step(const Json& j, std::size_t line, const std::set<std::string>& cast) {
    Step st;
    st.line = line;
    auto actor = [&](bool required) {
        if (!j.contains("actor")) {
            if (required) parse_error(line, "step needs an actor");
            return kAdmin;
        }
        auto a = j.at("actor").get<std::string>();
        if (a != kAdmin && !cast.contains(a)) parse_error(line, "actor '" + a + "' is not in the cast");
        return a;
    };
    if (j.contains("cmd")) {
        st.kind = Step::Kind::Command;
        st.cmd = j.at("cmd").get<std::string>();
        const auto slot = actor_slot(st.cmd);
        st.actor = actor(slot.has_value());
        if (slot && st.actor == kAdmin) parse_error(line, "'" + st.cmd + "' needs a participant actor");
        st.args = j.value("args", Json::object());
        if (!st.args.is_object()) parse_error(line, "args must be an object");
        if (j.contains("as")) st.label = j.at("as").get<std::string>();
        st.expect = j.value("expect", Json());
    } else if (j.contains("expect_mailbox")) {
        st.kind = Step::Kind::ExpectMailbox;
        st.target = j.at("expect_mailbox").get<std::string>();
        st.expect = j;
    } else if (j.contains("expect_notification")) {
        st.kind = Step::Kind::ExpectNotification;
        st.target = j.at("expect_notification").get<std::string>();
        st.expect = j;
    } else if (j.contains("fault")) {
        st.kind = Step::Kind::Fault;
        st.fault = j.at("fault").get<std::string>();
        if (st.fault != "drop" && st.fault != "reconnect") parse_error(line, "fault must be drop or reconnect");
        st.actor = actor(true);
        if (st.actor == kAdmin) parse_error(line, "the admin has no stream");
    } else {
        parse_error(line, "step needs one of cmd, expect_mailbox, expect_notification, fault");
    }
    return st;
}

} // namespace

Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir) {
    Scenario s;
    std::istringstream in{std::string(text)};
    std::size_t line_no = 0;
    bool header = false;
    std::set<std::string> cast;
    std::uint64_t tick = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) parse_error(line_no, "not a JSON object");
        try {
            if (!header) {
                if (!j.contains("scenario")) parse_error(line_no, "first record must be the scenario header");
                s.name = j.at("scenario").get<std::string>();
                for (const auto& m : j.value("cast", Json::array())) {
                    CastMember cm{m.at("name").get<std::string>(), m.at("role").get<Role>(),
                                  optional_field<std::string>(m, "domain")};
                    if (cm.name == kAdmin || !cast.insert(cm.name).second) {
                        parse_error(line_no, "duplicate cast name '" + cm.name + "'");
                    }
                    s.cast.push_back(std::move(cm));
                }
                for (const auto& c : j.value("circles", Json::array())) {
                    CircleDecl d{c.at("name").get<std::string>(),
                                 c.value("experts", std::vector<std::string>{}),
                                 c.value("patients", std::vector<std::string>{})};
                    for (const auto& n : d.experts) {
                        if (!cast.contains(n)) parse_error(line_no, "circle member '" + n + "' is not in the cast");
                    }
                    for (const auto& n : d.patients) {
                        if (!cast.contains(n)) parse_error(line_no, "circle member '" + n + "' is not in the cast");
                    }
                    if (cast.contains(d.name)) parse_error(line_no, "circle name '" + d.name + "' shadows a cast name");
                    s.circles.push_back(std::move(d));
                }
                if (j.contains("golden")) s.golden = base_dir / j.at("golden").get<std::string>();
                header = true;
                continue;
            }
            Step st = parse_step(j, line_no, cast);
            if (j.contains("tick")) {
                const auto t = j.at("tick").get<std::uint64_t>();
                if (t < tick) parse_error(line_no, "tick goes backwards");
                tick = t;
            }
            st.tick = tick;
            s.steps.push_back(std::move(st));
        } catch (const Json::exception& e) {
            parse_error(line_no, e.what());
        } catch (const Error& e) {
            if (e.code() == ErrorCode::ParseError) throw;
            parse_error(line_no, e.what());
        }
    }
    if (!header) parse_error(line_no, "missing scenario header");
    return s;
}

Scenario load_scenario(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(ErrorCode::ParseError, "cannot read " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), file.parent_path());
}

ScenarioReport run_scenario(const Scenario& scenario, Target& target) { return Runner(scenario, target).run(); }

bool ScenarioReport::passed() const {
    for (const auto& s : steps) {
        if (!s.passed) return false;
    }
    return golden_matched && streams_matched;
}

Json ScenarioReport::to_json() const {
    Json list = Json::array();
    for (const auto& s : steps) {
        Json o{{"index", s.index}, {"line", s.line}, {"step", s.what}, {"outcome", s.outcome}, {"passed", s.passed}};
        if (!s.diff.empty()) o["diff"] = s.diff;
        list.push_back(std::move(o));
    }
    Json j{{"scenario", name},   {"steps", list},       {"events", digest_lines.size()},
           {"digest", digest},   {"passed", passed()},  {"streams_matched", streams_matched},
           {"seconds", seconds}};
    if (golden_checked) j["golden_matched"] = golden_matched;
    if (!golden_diff.empty()) j["golden_diff"] = golden_diff;
    if (!stream_diff.empty()) j["stream_diff"] = stream_diff;
    return j;
}

std::string ScenarioReport::text() const {
    std::ostringstream o;
    o << "scenario " << name << '\n';
    for (const auto& s : steps) {
        o << (s.passed ? "  ok   " : "  FAIL ") << s.index;
        if (s.line) o << " (line " << s.line << ")";
        o << "  " << s.what << " -> " << s.outcome << '\n';
        if (!s.diff.empty()) o << "       " << s.diff << '\n';
    }
    o << "events  " << digest_lines.size() << '\n';
    o << "digest  " << digest << '\n';
    if (golden_checked) o << "golden  " << (golden_matched ? "match" : "MISMATCH " + golden_diff) << '\n';
    o << "streams " << (streams_matched ? "match" : "MISMATCH " + stream_diff) << '\n';
    o << (passed() ? "PASS" : "FAIL") << '\n';
    return o.str();
}

void write_golden(const std::filesystem::path& file, const std::vector<std::string>& lines) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) fail(ErrorCode::StorageFailure, "cannot write " + file.string());
    for (const auto& l : lines) out << l << '\n';
}

} // namespace cm::harness
