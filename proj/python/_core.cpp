// Thin bindings; structured values cross the boundary as JSON text and are
// decoded on the Python side.

#include <memory>
#include <optional>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "flipdeck/analytics.hpp"
#include "flipdeck/app.hpp"
#include "flipdeck/bank.hpp"
#include "flipdeck/event_store.hpp"
#include "flipdeck/fip.hpp"
#include "flipdeck/gateway.hpp"
#include "flipdeck/mcq_parser.hpp"
#include "flipdeck/pacing.hpp"
#include "flipdeck/similarity.hpp"
#include "flipdeck/simulate.hpp"

namespace py = pybind11;
using namespace flipdeck;

namespace {

std::string parse(const std::string& text, const std::string& kind) {
    auto r = mcq::parse_mcq(text, question_kind_from_string(kind));
    json out{{"ok", r.ok()}, {"warnings", r.warnings}};
    out["question"] = r.question ? json(*r.question) : json(nullptr);
    out["failure"] = r.failure ? json(std::string(mcq::to_string(*r.failure))) : json(nullptr);
    return out.dump();
}

pacing::State state_of(const std::string& s) {
    return json::parse(s).get<pacing::State>();
}

std::string time_to_answer(const std::vector<std::pair<Timestamp, std::optional<Timestamp>>>& pairs) {
    std::vector<analytics::Assignment> as;
    for (const auto& [a, b] : pairs) as.push_back({a, b});
    auto h = analytics::time_to_answer(as);
    json buckets = json::object();
    for (const auto& [day, count] : h.buckets) buckets[std::to_string(day)] = count;
    return json{{"buckets", buckets}, {"n", h.n}, {"unanswered", h.unanswered}}.dump();
}

// One in-memory service instance with a manual clock, driven through the
// same request handler the HTTP server uses.
class Service {
public:
    explicit Service(Timestamp start, const std::string& log_path)
        : app_(log_path.empty() ? std::unique_ptr<events::Storage>(std::make_unique<events::MemoryStorage>())
                                : std::make_unique<events::FileStorage>(log_path, false)),
          clock_(start),
          provider_(sim::make_class_provider()),
          gateway_(app_, clock_, provider_.get()),
          staff_(sim::ensure_staff(app_, start)) {}

    py::tuple request(const std::string& method, const std::string& path, const std::string& body,
                      const std::string& token, const std::map<std::string, std::string>& query) {
        gateway::ApiRequest r;
        r.method = method;
        r.path = path;
        r.body = body;
        r.query = query;
        if (!token.empty()) r.authorization = "Bearer " + token;
        gateway::ApiResponse res;
        {
            py::gil_scoped_release release;
            res = gateway_.handle(r);
        }
        return py::make_tuple(res.status, res.content_type, res.body);
    }

    std::string chat(const std::string& message) {
        json out = json::array();
        for (const auto& m : gateway_.handle_chat(gateway::chat_inbound_from_json(json::parse(message))))
            out.push_back(gateway::to_json(m));
        return out.dump();
    }

    void set_time(Timestamp t) { clock_.set(t); }
    Timestamp time() const { return clock_.now(); }
    std::string instructor_token() const { return staff_.instructor_token; }
    std::string assistant_token() const { return staff_.assistant_token; }
    py::bytes log_bytes() const { return py::bytes(app_.store().bytes()); }
    std::string state() const { return app_.state().bytes(); }

private:
    Application app_;
    ManualClock clock_;
    std::unique_ptr<fip::ProviderPort> provider_;
    gateway::Gateway gateway_;
    sim::Staff staff_;
};

py::tuple simulate(int students, int sessions, std::uint64_t seed, const std::string& course, Timestamp start,
                   const std::string& transport) {
    sim::Options opt;
    opt.students = students;
    opt.sessions = sessions;
    opt.seed = seed;
    opt.course = course;
    opt.start = start;
    Application app(std::make_unique<events::MemoryStorage>());
    ManualClock clock(opt.start);
    auto staff = sim::ensure_staff(app, opt.start);
    auto provider = sim::make_class_provider();
    gateway::Gateway gw(app, clock, provider.get());
    sim::Report report;
    {
        py::gil_scoped_release release;
        if (transport == "http") {
            gateway::HttpServer server(gw);
            int port = server.start("127.0.0.1", 0);
            {
                sim::HttpTransport t("127.0.0.1", port);
                report = sim::run(t, &clock, staff, opt);
            }
            server.stop();
        } else if (transport == "inprocess") {
            sim::InProcessTransport t(gw);
            report = sim::run(t, &clock, staff, opt);
        } else {
            throw Error(ErrorCode::BadParams, "transport must be inprocess or http");
        }
    }
    return py::make_tuple(report.to_json().dump(), py::bytes(app.store().bytes()));
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "flipdeck core bindings";

    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
    error_type.call_once_and_store_result([&]() { return py::object(py::exception<Error>(m, "FlipdeckError")); });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::tuple args = py::make_tuple(std::string(to_string(e.code())), std::string(e.what()));
            PyErr_SetObject(error_type.get_stored().ptr(), args.ptr());
        } catch (const json::exception& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    m.def("parse_mcq", &parse, py::arg("text"), py::arg("kind"));
    m.def("render_mcq", [](const std::string& q) { return mcq::render_mcq(mcq_from_json(json::parse(q))); });

    m.def("token_jaccard", [](const std::string& a, const std::string& b) { return token_jaccard(a, b); });
    m.def("reproduce_check", [](const std::string& a, const std::string& b) {
        auto r = bank::reproduce_check(a, b);
        return py::make_tuple(r.similarity, r.match);
    });
    m.def("next_difficulty", &bank::next_difficulty, py::arg("difficulty"), py::arg("accuracy"));

    m.def("init_pacing", [](const std::string& params) {
        pacing::Params p = params.empty() ? pacing::Params{} : json::parse(params).get<pacing::Params>();
        return json(pacing::init_pacing(p)).dump();
    });
    m.def("observe_quiz_outcome", [](const std::string& s, double accuracy) {
        return json(pacing::observe_quiz_outcome(state_of(s), accuracy)).dump();
    });
    m.def("start_new_topic", [](const std::string& s) { return json(pacing::start_new_topic(state_of(s))).dump(); });
    m.def("recommend_next", [](const std::string& s, std::size_t available) {
        auto r = pacing::recommend_next(state_of(s), available);
        return json{{"item_count", r.item_count}, {"band", r.band}, {"empty_bank", r.empty_bank}}.dump();
    });

    m.def("time_to_answer", &time_to_answer);
    m.def("difficulty_stats", [](const std::vector<double>& v) {
        auto s = analytics::difficulty_stats(v);
        return py::make_tuple(s.mean, s.variance, s.n);
    });
    m.def("leaderboard", [](const std::map<std::string, std::int64_t>& scores) {
        std::vector<py::tuple> out;
        for (const auto& r : analytics::leaderboard(scores)) out.push_back(py::make_tuple(r.rank, r.actor, r.score));
        return out;
    });

    m.def("build_flipped_prompt", [](const std::string& goal) { return fip::build_flipped_prompt(fip::goal_from_json(json::parse(goal))); });

    m.def("simulate", &simulate, py::arg("students"), py::arg("sessions"), py::arg("seed"), py::arg("course"),
          py::arg("start"), py::arg("transport"));
    m.def("rebuild_state", [](const py::bytes& log) { return rebuild_from_bytes(std::string(log)).bytes(); });

    py::class_<Service>(m, "Service")
        .def(py::init<Timestamp, const std::string&>(), py::arg("start"), py::arg("log_path") = "")
        .def("request", &Service::request)
        .def("chat", &Service::chat)
        .def("set_time", &Service::set_time)
        .def_property_readonly("time", &Service::time)
        .def_property_readonly("instructor_token", &Service::instructor_token)
        .def_property_readonly("assistant_token", &Service::assistant_token)
        .def("log_bytes", &Service::log_bytes)
        .def("state", &Service::state);
}
