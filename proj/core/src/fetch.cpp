#include "olm/fetch.hpp"

#include "olm/csv.hpp"
#include "olm/errors.hpp"
#include "olm/kvdoc.hpp"
#include "olm/text.hpp"

#include <httplib.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace olm::fetch {

namespace fs = std::filesystem;

std::string percent_encode(std::string_view raw) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    out.reserve(raw.size());
    for (unsigned char c : raw) {
        bool unreserved = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                          (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.' ||
                          c == '~';
        if (unreserved) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

std::string RequestDescriptor::canonical() const {
    std::string out = percent_encode(endpoint);
    out.push_back('?');
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (i > 0) out.push_back('&');
        out += percent_encode(params[i].first);
        out.push_back('=');
        out += percent_encode(params[i].second);
    }
    return out;
}

std::uint64_t RequestDescriptor::hash() const { return fnv1a64(canonical()); }

FixtureStore::FixtureStore(std::string dir) : dir_(std::move(dir)) { load_index(); }

void FixtureStore::load_index() {
    std::ifstream in(fs::path(dir_) / "index.txt");
    if (!in) return; // empty store until the first recording
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> parts = split(line, '\t');
        if (parts.size() != 3) {
            throw ValidationError("fixture index line " +
                                  format_int(static_cast<std::int64_t>(line_no)) +
                                  ": expected hash<TAB>date<TAB>request");
        }
        std::uint64_t h = 0;
        try {
            h = static_cast<std::uint64_t>(std::stoull(parts[0], nullptr, 16));
        } catch (const std::exception&) {
            throw ValidationError("fixture index line " +
                                  format_int(static_cast<std::int64_t>(line_no)) +
                                  ": bad hash '" + parts[0] + "'");
        }
        if (index_.count(h)) {
            throw ValidationError("fixture index: duplicate hash " + parts[0]);
        }
        order_.push_back(h);
        index_.emplace(h, Entry{parts[2], parts[1]});
    }
}

void FixtureStore::write_index() const {
    std::ofstream out(fs::path(dir_) / "index.txt", std::ios::binary);
    if (!out) throw ValidationError("cannot write fixture index in " + dir_);
    for (std::uint64_t h : order_) {
        const Entry& e = index_.at(h);
        out << hex64(h) << '\t' << e.captured_at << '\t' << e.canonical << '\n';
    }
}

bool FixtureStore::has(const RequestDescriptor& request) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = index_.find(request.hash());
    return it != index_.end() && it->second.canonical == request.canonical();
}

std::optional<std::string> FixtureStore::lookup(const RequestDescriptor& request) const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::uint64_t h = request.hash();
    auto it = index_.find(h);
    if (it == index_.end()) return std::nullopt;
    if (it->second.canonical != request.canonical()) {
        throw InternalError("fixture hash collision on " + hex64(h));
    }
    std::ifstream in(fs::path(dir_) / (hex64(h) + ".body"), std::ios::binary);
    if (!in) throw ValidationError("fixture body missing for " + hex64(h));
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

void FixtureStore::store(const RequestDescriptor& request, const std::string& body,
                         const std::string& captured_at) {
    std::lock_guard<std::mutex> lock(mutex_);
    fs::create_directories(dir_);
    std::uint64_t h = request.hash();
    auto it = index_.find(h);
    if (it != index_.end() && it->second.canonical != request.canonical()) {
        throw InternalError("fixture hash collision on " + hex64(h));
    }
    {
        std::ofstream out(fs::path(dir_) / (hex64(h) + ".body"), std::ios::binary);
        if (!out) throw ValidationError("cannot write fixture body in " + dir_);
        out << body;
    }
    if (it == index_.end()) {
        order_.push_back(h);
        index_.emplace(h, Entry{request.canonical(), captured_at});
    } else {
        it->second.captured_at = captured_at; // re-recording refreshes the date
    }
    write_index();
}

std::size_t FixtureStore::size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return order_.size();
}

double SystemClock::now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void SystemClock::sleep_for(double seconds) {
    if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

RateLimiter::RateLimiter(double min_interval_seconds, double jitter_fraction,
                         std::uint64_t seed, Clock& clock)
    : min_interval_(min_interval_seconds), jitter_fraction_(jitter_fraction), rng_(seed),
      clock_(clock) {
    if (min_interval_ < 0 || jitter_fraction_ < 0) {
        throw ValidationError("rate limiter intervals must be >= 0");
    }
}

void RateLimiter::acquire() {
    std::lock_guard<std::mutex> lock(mutex_);
    double now = clock_.now();
    if (now < next_allowed_) {
        clock_.sleep_for(next_allowed_ - now);
        now = clock_.now();
    }
    double jitter = jitter_fraction_ > 0 ? min_interval_ * jitter_fraction_ * rng_.unit() : 0;
    next_allowed_ = now + min_interval_ + jitter;
}

HttpResponse ReplayTransport::get(const RequestDescriptor& request) {
    std::optional<std::string> body = store_.lookup(request);
    if (!body) {
        throw TransportError("unrecorded request in replay mode: " + request.canonical());
    }
    return HttpResponse{200, std::move(*body)};
}

struct HttpTransport::Impl {
    HttpOptions options;
    RateLimiter& limiter;
    Clock& clock;
    FixtureStore* record_to;
    std::mutex in_flight;

    Impl(HttpOptions opt, RateLimiter& lim, Clock& clk, FixtureStore* rec)
        : options(std::move(opt)), limiter(lim), clock(clk), record_to(rec) {}
};

HttpTransport::HttpTransport(HttpOptions options, RateLimiter& limiter, Clock& clock,
                             FixtureStore* record_to)
    : impl_(std::make_unique<Impl>(std::move(options), limiter, clock, record_to)) {
    if (impl_->options.host.empty()) throw ValidationError("transport host is empty");
    if (impl_->options.max_attempts < 1) {
        throw ValidationError("transport needs at least 1 attempt");
    }
}

HttpTransport::~HttpTransport() = default;

namespace {

std::string today_utc() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[16];
    std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
    return buf;
}

} // namespace

HttpResponse HttpTransport::get(const RequestDescriptor& request) {
    std::lock_guard<std::mutex> lock(impl_->in_flight);
    const std::string path = "/" + request.canonical();
    std::string last_error;

    for (int attempt = 1; attempt <= impl_->options.max_attempts; ++attempt) {
        if (attempt > 1) {
            double backoff = impl_->options.backoff_initial;
            for (int i = 2; i < attempt; ++i) backoff *= impl_->options.backoff_multiplier;
            impl_->clock.sleep_for(backoff);
        }
        impl_->limiter.acquire();

        httplib::Client client(impl_->options.host, impl_->options.port);
        httplib::Result res = client.Get(path);
        if (!res) {
            last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error " + format_int(res->status);
            continue;
        }
        if (res->status != 200) {
            throw TransportError("GET " + request.canonical() + ": status " +
                                 format_int(res->status));
        }
        if (impl_->record_to) {
            impl_->record_to->store(request, res->body, today_utc());
        }
        return HttpResponse{res->status, res->body};
    }
    throw TransportError("GET " + request.canonical() + " failed after " +
                         format_int(impl_->options.max_attempts) + " attempts: " + last_error);
}

FetchPlan plan_batches(const std::vector<std::string>& sites, const std::string& anchor) {
    if (sites.empty()) throw ValidationError("no sites to plan");
    if (anchor.empty()) throw ValidationError("anchor term is empty");
    for (const std::string& s : sites) {
        if (s.empty()) throw ValidationError("site urls must be non-empty");
        if (s == anchor) {
            throw ValidationError("anchor '" + anchor + "' must not appear in the site list");
        }
    }

    FetchPlan plan;
    plan.sites = sites;
    plan.anchor = anchor;
    for (std::size_t i = 0; i < sites.size(); i += 4) {
        std::vector<std::string> batch{anchor};
        for (std::size_t j = i; j < std::min(i + 4, sites.size()); ++j) {
            batch.push_back(sites[j]);
        }
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

namespace {

TrendsSeries parse_batch_series(const CsvTable& table, const std::string& term,
                                const Date& start, const Date& end) {
    TrendsSeries series;
    series.site = term;
    for (const auto& row : table.rows) {
        if (row[1] != term) continue;
        Date d = parse_date(row[0]);
        if (d < start || end < d) {
            throw ValidationError("date " + row[0] + " outside the requested window");
        }
        double v = parse_number(row[2]);
        if (!(v >= 0)) throw ValidationError("negative interest value " + row[2]);
        if (!series.points.empty() && !(series.points.back().date < d)) {
            throw ValidationError("dates for term '" + term + "' are not strictly increasing");
        }
        series.points.push_back({d, v});
    }
    if (series.points.empty()) {
        throw ValidationError("term '" + term + "' missing from the response");
    }
    return series;
}

} // namespace

std::vector<TrendsSeries> fetch_trends(const FetchPlan& plan, Transport& transport) {
    if (plan.window_start.empty() || plan.window_end.empty()) {
        throw ValidationError("fetch window is not set");
    }
    if (!plan.window_start.valid() || !plan.window_end.valid() ||
        plan.window_end < plan.window_start) {
        throw ValidationError("fetch window " + format_date(plan.window_start) + ".." +
                              format_date(plan.window_end) + " is invalid");
    }
    if (plan.batches.empty()) throw ValidationError("fetch plan has no batches");
    for (const auto& batch : plan.batches) {
        if (batch.empty() || batch.front() != plan.anchor) {
            throw ValidationError("every batch must lead with the anchor term");
        }
        if (batch.size() > 5) throw ValidationError("batches are limited to 5 terms");
    }

    std::vector<TrendsSeries> out;
    for (const auto& batch : plan.batches) {
        RequestDescriptor request;
        request.endpoint = "trends";
        request.params = {{"start", format_date(plan.window_start)},
                          {"end", format_date(plan.window_end)},
                          {"terms", join(batch, ",")}};
        HttpResponse response = transport.get(request);

        try {
            std::istringstream in(response.body);
            CsvTable table = read_csv(in);
            if (table.header != std::vector<std::string>{"date", "term", "value"}) {
                throw ValidationError("expected date,term,value header");
            }
            for (const auto& row : table.rows) {
                bool known = false;
                for (const std::string& t : batch) known |= (t == row[1]);
                if (!known) throw ValidationError("unrequested term '" + row[1] + "'");
            }
            for (const std::string& term : batch) {
                out.push_back(
                    parse_batch_series(table, term, plan.window_start, plan.window_end));
            }
        } catch (const ValidationError& e) {
            throw TransportError("malformed response for " + request.canonical() + ": " +
                                 e.what());
        }
    }
    return out;
}

SiterankResult fetch_siterank(const std::string& url, Transport& transport) {
    if (url.empty()) throw ValidationError("siterank url is empty");
    RequestDescriptor request;
    request.endpoint = "siterank";
    request.params = {{"url", url}};
    HttpResponse response = transport.get(request);

    try {
        KvDoc doc = KvDoc::parse_string(response.body);
        SiterankResult result;
        if (doc.has("alexa_rank")) {
            result.alexa_rank = doc.int_at("alexa_rank");
            if (*result.alexa_rank < 1) throw ValidationError("alexa_rank must be >= 1");
        }
        if (doc.has("monthly_uniques")) {
            result.monthly_uniques = doc.int_at("monthly_uniques");
            if (*result.monthly_uniques < 0) {
                throw ValidationError("monthly_uniques must be >= 0");
            }
        }
        return result;
    } catch (const ValidationError& e) {
        throw TransportError("malformed response for " + request.canonical() + ": " + e.what());
    }
}

} // namespace olm::fetch
