#include "olm/fetch.hpp"

#include "olm/date.hpp"
#include "olm/errors.hpp"
#include "olm/text.hpp"

#include <httplib.h>

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"

using namespace olm;
using namespace olm::fetch;

namespace {

namespace fs = std::filesystem;

// Scratch fixture directory, wiped on construction and destruction.
struct TempDir {
    fs::path path;

    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct StubTransport : Transport {
    std::map<std::string, HttpResponse> responses; // keyed by canonical form
    std::vector<RequestDescriptor> calls;

    HttpResponse get(const RequestDescriptor& request) override {
        calls.push_back(request);
        auto it = responses.find(request.canonical());
        if (it == responses.end()) {
            throw TransportError("no stub response for " + request.canonical());
        }
        return it->second;
    }
};

RequestDescriptor trends_request(const std::string& start, const std::string& end,
                                 const std::string& terms) {
    RequestDescriptor r;
    r.endpoint = "trends";
    r.params = {{"start", start}, {"end", end}, {"terms", terms}};
    return r;
}

FetchPlan two_site_plan() {
    FetchPlan plan = plan_batches({"a.example", "b.example"}, "anchor.example");
    plan.window_start = parse_date("2016-03-01");
    plan.window_end = parse_date("2016-03-03");
    return plan;
}

const char* kGoodBatchBody =
    "date,term,value\n"
    "2016-03-01,anchor.example,80\n"
    "2016-03-02,anchor.example,100\n"
    "2016-03-03,anchor.example,90\n"
    "2016-03-01,a.example,8\n"
    "2016-03-02,a.example,12\n"
    "2016-03-03,a.example,10\n"
    "2016-03-01,b.example,1\n"
    "2016-03-02,b.example,0\n"
    "2016-03-03,b.example,2\n";

const std::string kTwoSiteCanonical =
    "trends?start=2016-03-01&end=2016-03-03&"
    "terms=anchor.example%2Ca.example%2Cb.example";

} // namespace

TEST_CASE("percent encoding") {
    CHECK(percent_encode("AZaz09-_.~") == "AZaz09-_.~");
    CHECK(percent_encode("a b") == "a%20b");
    CHECK(percent_encode("a/b?c=d&e") == "a%2Fb%3Fc%3Dd%26e");
    CHECK(percent_encode("x,y") == "x%2Cy");
    CHECK(percent_encode("\xC3\xA9") == "%C3%A9"); // bytes pass through encoded
    CHECK(percent_encode("") == "");
    CHECK(percent_encode("100%") == "100%25");
}

TEST_CASE("request canonical form and hash") {
    RequestDescriptor r = trends_request("2016-03-01", "2016-03-14", "a.example,b.example");
    CHECK(r.canonical() ==
          "trends?start=2016-03-01&end=2016-03-14&terms=a.example%2Cb.example");
    CHECK(r.hash() == fnv1a64(r.canonical()));

    RequestDescriptor bare;
    bare.endpoint = "siterank";
    CHECK(bare.canonical() == "siterank?");

    // Parameter order is part of the identity.
    RequestDescriptor flipped = r;
    std::swap(flipped.params[0], flipped.params[1]);
    CHECK(flipped.canonical() != r.canonical());
    CHECK(flipped.hash() != r.hash());
}

TEST_CASE("batch planning") {
    std::vector<std::string> sites;
    for (int i = 1; i <= 9; ++i) sites.push_back("s" + format_int(i) + ".example");

    FetchPlan plan = plan_batches(sites, "anchor.example");
    CHECK(plan.sites == sites);
    CHECK(plan.anchor == "anchor.example");
    REQUIRE(plan.batches.size() == 3);
    CHECK(plan.batches[0] ==
          std::vector<std::string>{"anchor.example", "s1.example", "s2.example", "s3.example",
                                   "s4.example"});
    CHECK(plan.batches[1] ==
          std::vector<std::string>{"anchor.example", "s5.example", "s6.example", "s7.example",
                                   "s8.example"});
    CHECK(plan.batches[2] == std::vector<std::string>{"anchor.example", "s9.example"});

    FetchPlan one = plan_batches({"only.example"}, "anchor.example");
    REQUIRE(one.batches.size() == 1);
    CHECK(one.batches[0] == std::vector<std::string>{"anchor.example", "only.example"});

    CHECK(plan_batches({"a", "b", "c", "d"}, "anchor").batches.size() == 1);
    CHECK(plan_batches({"a", "b", "c", "d", "e"}, "anchor").batches.size() == 2);

    CHECK_THROWS_AS(plan_batches({}, "anchor.example"), ValidationError);
    CHECK_THROWS_AS(plan_batches({"a.example"}, ""), ValidationError);
    CHECK_THROWS_AS(plan_batches({"a.example", ""}, "anchor.example"), ValidationError);
    CHECK_THROWS_AS(plan_batches({"a.example", "anchor.example"}, "anchor.example"),
                    ValidationError);
}

TEST_CASE("fixture store records and replays bodies") {
    TempDir dir("olm_fetch_store_test");
    RequestDescriptor r = trends_request("2016-03-01", "2016-03-03", "a.example");
    const std::string body = "date,term,value\n2016-03-01,a.example,5\n";

    {
        FixtureStore store(dir.path.string());
        CHECK(store.size() == 0);
        CHECK_FALSE(store.has(r));
        CHECK_FALSE(store.lookup(r).has_value());

        store.store(r, body, "2016-04-08");
        CHECK(store.size() == 1);
        CHECK(store.has(r));
        CHECK(store.lookup(r) == body);
    }

    // A fresh instance reads the same bytes back from disk.
    FixtureStore reopened(dir.path.string());
    CHECK(reopened.size() == 1);
    CHECK(reopened.lookup(r) == body);

    std::ifstream index(dir.path / "index.txt");
    std::string line;
    REQUIRE(std::getline(index, line));
    CHECK(line == hex64(r.hash()) + "\t2016-04-08\t" + r.canonical());
    CHECK_FALSE(std::getline(index, line));

    // Re-recording overwrites the body without growing the index.
    reopened.store(r, "replacement", "2016-05-01");
    CHECK(reopened.size() == 1);
    CHECK(reopened.lookup(r) == "replacement");

    ReplayTransport replay(reopened);
    CHECK(replay.get(r).status == 200);
    CHECK(replay.get(r).body == "replacement");

    RequestDescriptor missing = trends_request("2016-03-01", "2016-03-03", "b.example");
    try {
        replay.get(missing);
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(std::string(e.what()).find(missing.canonical()) != std::string::npos);
    }
}

TEST_CASE("fixture store rejects corrupted indexes") {
    TempDir dir("olm_fetch_badindex_test");
    auto write_index = [&](const std::string& content) {
        std::ofstream out(dir.path / "index.txt", std::ios::binary);
        out << content;
    };

    write_index("nonsense line without tabs\n");
    CHECK_THROWS_AS(FixtureStore(dir.path.string()), ValidationError);

    write_index("abc\t2016-04-08\n"); // two fields instead of three
    CHECK_THROWS_AS(FixtureStore(dir.path.string()), ValidationError);

    write_index("zzzz\t2016-04-08\ttrends?\n"); // unparsable hash
    CHECK_THROWS_AS(FixtureStore(dir.path.string()), ValidationError);

    write_index("00000000000000aa\t2016-04-08\ttrends?\n"
                "00000000000000aa\t2016-04-09\tsiterank?\n");
    CHECK_THROWS_AS(FixtureStore(dir.path.string()), ValidationError); // duplicate hash

    // A valid index entry whose body file is gone is detected at lookup.
    RequestDescriptor r = trends_request("2016-03-01", "2016-03-03", "a.example");
    write_index(hex64(r.hash()) + "\t2016-04-08\t" + r.canonical() + "\n");
    FixtureStore store(dir.path.string());
    CHECK(store.has(r));
    CHECK_THROWS_AS(store.lookup(r), ValidationError);
}

TEST_CASE("rate limiter spaces requests with bounded jitter") {
    VirtualClock clock;
    RateLimiter limiter(2.0, 0.25, 7, clock);

    std::vector<double> fire_times;
    for (int i = 0; i < 10; ++i) {
        limiter.acquire();
        fire_times.push_back(clock.now());
    }
    CHECK(fire_times.front() == 0.0); // the first request goes immediately

    bool saw_jitter = false;
    for (std::size_t i = 1; i < fire_times.size(); ++i) {
        double gap = fire_times[i] - fire_times[i - 1];
        CHECK(gap >= 2.0);
        CHECK(gap <= 2.5); // interval plus at most jitter_fraction * interval
        if (gap > 2.0) saw_jitter = true;
    }
    CHECK(saw_jitter);

    // Same seed, same schedule.
    VirtualClock clock2;
    RateLimiter limiter2(2.0, 0.25, 7, clock2);
    for (int i = 0; i < 10; ++i) {
        limiter2.acquire();
        CHECK(clock2.now() == fire_times[static_cast<std::size_t>(i)]);
    }

    VirtualClock clock3;
    RateLimiter strict(1.0, 0.0, 1, clock3);
    strict.acquire();
    strict.acquire();
    strict.acquire();
    CHECK(clock3.now() == 2.0); // exactly one interval per follow-up request

    CHECK_THROWS_AS(RateLimiter(-1.0, 0.25, 1, clock), ValidationError);
    CHECK_THROWS_AS(RateLimiter(1.0, -0.1, 1, clock), ValidationError);
}

TEST_CASE("trends download happy path") {
    FetchPlan plan = two_site_plan();
    StubTransport transport;
    transport.responses[kTwoSiteCanonical] = {200, kGoodBatchBody};

    std::vector<TrendsSeries> series = fetch_trends(plan, transport);
    REQUIRE(series.size() == 3); // anchor first, then the batch sites
    CHECK(series[0].site == "anchor.example");
    CHECK(series[1].site == "a.example");
    CHECK(series[2].site == "b.example");
    for (const TrendsSeries& s : series) {
        CHECK_FALSE(s.is_normalized);
        REQUIRE(s.points.size() == 3);
        CHECK(s.points.front().date == parse_date("2016-03-01"));
        CHECK(s.points.back().date == parse_date("2016-03-03"));
    }
    CHECK(series[0].points[1].value == 100.0);
    CHECK(series[1].points[1].value == 12.0);
    CHECK(series[2].points[1].value == 0.0); // zero interest is valid data

    REQUIRE(transport.calls.size() == 1);
    CHECK(transport.calls[0].endpoint == "trends");
    CHECK(transport.calls[0].params ==
          std::vector<std::pair<std::string, std::string>>{
              {"start", "2016-03-01"},
              {"end", "2016-03-03"},
              {"terms", "anchor.example,a.example,b.example"}});

    // Two batches produce series in batch order with the anchor repeated.
    FetchPlan wide = plan_batches({"a.example", "b.example", "c.example", "d.example",
                                   "e.example"},
                                  "anchor.example");
    wide.window_start = parse_date("2016-03-01");
    wide.window_end = parse_date("2016-03-02");
    StubTransport wide_transport;
    wide_transport.responses["trends?start=2016-03-01&end=2016-03-02&"
                             "terms=anchor.example%2Ca.example%2Cb.example%2Cc.example%2C"
                             "d.example"] = {
        200,
        "date,term,value\n"
        "2016-03-01,anchor.example,50\n2016-03-02,anchor.example,60\n"
        "2016-03-01,a.example,1\n2016-03-02,a.example,2\n"
        "2016-03-01,b.example,3\n2016-03-02,b.example,4\n"
        "2016-03-01,c.example,5\n2016-03-02,c.example,6\n"
        "2016-03-01,d.example,7\n2016-03-02,d.example,8\n"};
    wide_transport.responses["trends?start=2016-03-01&end=2016-03-02&"
                             "terms=anchor.example%2Ce.example"] = {
        200,
        "date,term,value\n"
        "2016-03-01,anchor.example,55\n2016-03-02,anchor.example,65\n"
        "2016-03-01,e.example,9\n2016-03-02,e.example,10\n"};

    std::vector<TrendsSeries> wide_series = fetch_trends(wide, wide_transport);
    REQUIRE(wide_series.size() == 7);
    CHECK(wide_series[0].site == "anchor.example");
    CHECK(wide_series[5].site == "anchor.example"); // second batch anchor
    CHECK(wide_series[6].site == "e.example");
    CHECK(wide_series[5].points[0].value == 55.0);
    CHECK(transport.calls.size() == 1);
    CHECK(wide_transport.calls.size() == 2);
}

TEST_CASE("trends validation happens before any request") {
    StubTransport transport; // no responses: any call would throw

    FetchPlan plan = two_site_plan();
    plan.window_start = Date{};
    plan.window_end = Date{};
    CHECK_THROWS_AS(fetch_trends(plan, transport), ValidationError);

    plan = two_site_plan();
    plan.window_end = parse_date("2016-02-28"); // before the start
    CHECK_THROWS_AS(fetch_trends(plan, transport), ValidationError);

    plan = two_site_plan();
    plan.batches.clear();
    CHECK_THROWS_AS(fetch_trends(plan, transport), ValidationError);

    plan = two_site_plan();
    plan.batches[0].erase(plan.batches[0].begin()); // anchor no longer leads
    CHECK_THROWS_AS(fetch_trends(plan, transport), ValidationError);

    plan = two_site_plan();
    plan.batches[0].push_back("f.example");
    plan.batches[0].push_back("g.example");
    plan.batches[0].push_back("h.example"); // six terms
    CHECK_THROWS_AS(fetch_trends(plan, transport), ValidationError);

    CHECK(transport.calls.empty());
}

TEST_CASE("malformed trends responses are transport errors") {
    auto expect_malformed = [](const std::string& body) {
        FetchPlan plan = two_site_plan();
        StubTransport transport;
        transport.responses[kTwoSiteCanonical] = {200, body};
        try {
            fetch_trends(plan, transport);
            FAIL("expected TransportError for body: " << body);
        } catch (const TransportError& e) {
            CHECK(std::string(e.what()).find("malformed response") != std::string::npos);
        }
    };

    expect_malformed("dt,term,value\n2016-03-01,anchor.example,1\n"); // wrong header
    expect_malformed("date,term,value\n2016-03-01,intruder.example,1\n"); // unknown term
    expect_malformed( // date outside the window
        "date,term,value\n"
        "2016-03-01,anchor.example,1\n2016-03-02,anchor.example,1\n"
        "2016-03-04,anchor.example,1\n"
        "2016-03-01,a.example,1\n2016-03-01,b.example,1\n");
    expect_malformed( // duplicate date: not strictly increasing
        "date,term,value\n"
        "2016-03-01,anchor.example,1\n2016-03-01,anchor.example,2\n"
        "2016-03-01,a.example,1\n2016-03-01,b.example,1\n");
    expect_malformed( // term b.example missing entirely
        "date,term,value\n"
        "2016-03-01,anchor.example,1\n"
        "2016-03-01,a.example,1\n");
    expect_malformed( // negative interest value
        "date,term,value\n"
        "2016-03-01,anchor.example,-4\n"
        "2016-03-01,a.example,1\n2016-03-01,b.example,1\n");
    expect_malformed( // non-numeric value
        "date,term,value\n"
        "2016-03-01,anchor.example,abc\n"
        "2016-03-01,a.example,1\n2016-03-01,b.example,1\n");
    expect_malformed("");
}

TEST_CASE("siterank download") {
    StubTransport transport;
    transport.responses["siterank?url=x.example"] = {200,
                                                     "alexa_rank = 123\n"
                                                     "monthly_uniques = 4500\n"};
    transport.responses["siterank?url=rank-only.example"] = {200, "alexa_rank = 9\n"};
    transport.responses["siterank?url=empty.example"] = {200, ""};

    SiterankResult full = fetch_siterank("x.example", transport);
    CHECK(full.alexa_rank == 123);
    CHECK(full.monthly_uniques == 4500);

    SiterankResult partial = fetch_siterank("rank-only.example", transport);
    CHECK(partial.alexa_rank == 9);
    CHECK_FALSE(partial.monthly_uniques.has_value());

    SiterankResult empty = fetch_siterank("empty.example", transport);
    CHECK_FALSE(empty.alexa_rank.has_value());
    CHECK_FALSE(empty.monthly_uniques.has_value());

    auto expect_malformed = [](const std::string& url, const std::string& body) {
        StubTransport t;
        t.responses["siterank?url=" + percent_encode(url)] = {200, body};
        CHECK_THROWS_AS(fetch_siterank(url, t), TransportError);
    };
    expect_malformed("bad1.example", "alexa_rank = 0\n");        // rank below 1
    expect_malformed("bad2.example", "monthly_uniques = -5\n");  // negative uniques
    expect_malformed("bad3.example", "alexa_rank = abc\n");      // unparsable int
    expect_malformed("bad4.example", "== broken\n");             // not a kv document

    StubTransport untouched;
    CHECK_THROWS_AS(fetch_siterank("", untouched), ValidationError);
    CHECK(untouched.calls.empty());
}

TEST_CASE("live transport retries, records and gives up") {
    httplib::Server server;
    std::atomic<int> flaky_calls{0};
    std::atomic<int> broken_calls{0};
    std::atomic<int> missing_calls{0};
    server.Get("/flaky", [&](const httplib::Request&, httplib::Response& res) {
        if (++flaky_calls < 3) {
            res.status = 503;
        } else {
            res.set_content("alexa_rank = 77\n", "text/plain");
        }
    });
    server.Get("/broken", [&](const httplib::Request&, httplib::Response& res) {
        ++broken_calls;
        res.status = 500;
    });
    server.Get("/missing", [&](const httplib::Request&, httplib::Response& res) {
        ++missing_calls;
        res.status = 404;
    });

    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    VirtualClock clock;
    RateLimiter limiter(0.0, 0.0, 1, clock);
    TempDir dir("olm_fetch_live_test");
    FixtureStore store(dir.path.string());

    HttpOptions options;
    options.host = "127.0.0.1";
    options.port = port;
    options.max_attempts = 3;
    options.backoff_initial = 4.0; // virtual seconds, no real waiting

    {
        HttpTransport transport(options, limiter, clock, &store);
        RequestDescriptor flaky;
        flaky.endpoint = "flaky";

        HttpResponse response = transport.get(flaky);
        CHECK(response.status == 200);
        CHECK(response.body == "alexa_rank = 77\n");
        CHECK(flaky_calls == 3);            // two 503s, then success
        CHECK(clock.now() >= 4.0 + 8.0);    // exponential backoff ran on the clock

        // The successful body was recorded and replays without the network.
        CHECK(store.size() == 1);
        CHECK(store.lookup(flaky) == response.body);
        ReplayTransport replay(store);
        CHECK(replay.get(flaky).body == response.body);

        RequestDescriptor broken;
        broken.endpoint = "broken";
        try {
            transport.get(broken);
            FAIL("expected TransportError");
        } catch (const TransportError& e) {
            CHECK(std::string(e.what()).find("failed after 3 attempts") != std::string::npos);
            CHECK(std::string(e.what()).find("server error 500") != std::string::npos);
        }
        CHECK(broken_calls == 3);

        // Client errors are not retried.
        RequestDescriptor missing;
        missing.endpoint = "missing";
        try {
            transport.get(missing);
            FAIL("expected TransportError");
        } catch (const TransportError& e) {
            CHECK(std::string(e.what()).find("status 404") != std::string::npos);
        }
        CHECK(missing_calls == 1);
        CHECK(store.size() == 1); // failures never touch the store
    }

    server.stop();
    server_thread.join();

    // With the server gone the connection itself fails, bounded by attempts.
    VirtualClock dead_clock;
    RateLimiter dead_limiter(0.0, 0.0, 1, dead_clock);
    HttpOptions dead = options;
    dead.max_attempts = 2;
    dead.backoff_initial = 0.5;
    HttpTransport dead_transport(dead, dead_limiter, dead_clock);
    RequestDescriptor any;
    any.endpoint = "flaky";
    try {
        dead_transport.get(any);
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(std::string(e.what()).find("failed after 2 attempts") != std::string::npos);
        CHECK(std::string(e.what()).find("connection failed") != std::string::npos);
    }

    VirtualClock c;
    RateLimiter l(0.0, 0.0, 1, c);
    HttpOptions no_host;
    CHECK_THROWS_AS(HttpTransport(no_host, l, c), ValidationError);
    HttpOptions zero_attempts = options;
    zero_attempts.max_attempts = 0;
    CHECK_THROWS_AS(HttpTransport(zero_attempts, l, c), ValidationError);
}
