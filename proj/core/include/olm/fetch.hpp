#pragma once

#include "olm/date.hpp"
#include "olm/features.hpp"
#include "olm/rng.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace olm::fetch {

// A GET request in canonical form: endpoint plus ordered query parameters.
// The canonical string (percent-encoded, order-preserving) is the identity
// used for fixture lookup and hashing.
struct RequestDescriptor {
    std::string endpoint;
    std::vector<std::pair<std::string, std::string>> params;

    std::string canonical() const;
    std::uint64_t hash() const; // fnv1a64 of canonical()

    bool operator==(const RequestDescriptor&) const = default;
};

std::string percent_encode(std::string_view raw);

// On-disk store of recorded responses: one <hash>.body file per request
// plus an index.txt mapping hashes to capture dates and canonical forms.
// Replayed bodies are byte-identical to what was recorded. Reads may be
// concurrent; writes are serialized.
class FixtureStore {
public:
    explicit FixtureStore(std::string dir);

    bool has(const RequestDescriptor& request) const;
    // The stored body, or nullopt when the request was never recorded.
    std::optional<std::string> lookup(const RequestDescriptor& request) const;
    void store(const RequestDescriptor& request, const std::string& body,
               const std::string& captured_at);

    std::size_t size() const;
    const std::string& dir() const { return dir_; }

private:
    struct Entry {
        std::string canonical;
        std::string captured_at;
    };

    std::string dir_;
    std::vector<std::uint64_t> order_; // index.txt line order
    std::unordered_map<std::uint64_t, Entry> index_;
    mutable std::mutex mutex_;

    void load_index();
    void write_index() const;
};

// Time source behind rate limiting and retry backoff; swapped for a
// virtual clock in tests so politeness is verifiable without waiting.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() = 0; // seconds, monotonic
    virtual void sleep_for(double seconds) = 0;
};

class SystemClock : public Clock {
public:
    double now() override;
    void sleep_for(double seconds) override;
};

class VirtualClock : public Clock {
public:
    double now() override { return t_; }
    void sleep_for(double seconds) override {
        if (seconds > 0) t_ += seconds;
    }

private:
    double t_ = 0;
};

// Spaces requests at least min_interval seconds apart, plus a random
// jitter of up to jitter_fraction * min_interval. acquire() blocks (via
// the clock) until the next request may be sent.
class RateLimiter {
public:
    RateLimiter(double min_interval_seconds, double jitter_fraction, std::uint64_t seed,
                Clock& clock);

    void acquire();

private:
    double min_interval_;
    double jitter_fraction_;
    Rng rng_;
    Clock& clock_;
    double next_allowed_ = 0;
    std::mutex mutex_;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse get(const RequestDescriptor& request) = 0;
};

// Serves recorded fixtures; an unrecorded request is a TransportError.
class ReplayTransport : public Transport {
public:
    explicit ReplayTransport(const FixtureStore& store) : store_(store) {}

    HttpResponse get(const RequestDescriptor& request) override;

private:
    const FixtureStore& store_;
};

struct HttpOptions {
    std::string host; // plain-http host, e.g. "127.0.0.1"
    int port = 80;
    int max_attempts = 3;           // on connect failure / 5xx
    double backoff_initial = 1.0;   // seconds before the second attempt
    double backoff_multiplier = 2.0;
};

// Live transport over plain HTTP with rate limiting, bounded retries with
// exponential backoff, and optional recording of every successful body to
// a fixture store so live runs are replayable later. One request is in
// flight at a time per instance; use one instance per remote host.
class HttpTransport : public Transport {
public:
    HttpTransport(HttpOptions options, RateLimiter& limiter, Clock& clock,
                  FixtureStore* record_to = nullptr);
    ~HttpTransport();

    HttpResponse get(const RequestDescriptor& request) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// The batched download schedule for search-interest series. Every batch
// carries the anchor term first so all batches share a comparison point;
// at most five terms fit in one request.
struct FetchPlan {
    std::vector<std::string> sites; // non-anchor, input order
    std::string anchor;
    Date window_start;
    Date window_end;
    std::vector<std::vector<std::string>> batches;

    bool operator==(const FetchPlan&) const = default;
};

// Partitions sites into ceil(|sites|/4) batches of anchor + up to four
// sites, preserving input order. The window is left for the caller to set.
FetchPlan plan_batches(const std::vector<std::string>& sites, const std::string& anchor);

// One raw series per term per batch (the anchor term repeats per batch),
// in batch order then within-batch term order. The response body is
// date,term,value delimited text; out-of-window dates, unknown terms or
// missing terms make the response malformed. Malformed responses raise
// TransportError: the remote (or the fixture) sent unusable bytes.
std::vector<TrendsSeries> fetch_trends(const FetchPlan& plan, Transport& transport);

struct SiterankResult {
    std::optional<std::int64_t> alexa_rank;
    std::optional<std::int64_t> monthly_uniques;

    bool operator==(const SiterankResult&) const = default;
};

// Either value may be absent in the response; absence passes through to
// the imputation rules downstream.
SiterankResult fetch_siterank(const std::string& url, Transport& transport);

} // namespace olm::fetch
