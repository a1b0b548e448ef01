#include "obliv/bench.hpp"

#include <time.h>

#include <algorithm>
#include <barrier>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <thread>

#include "obliv/arena.hpp"
#include "obliv/error.hpp"

namespace obliv {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void Fnv(std::uint64_t& h, std::uint8_t byte) {
    h ^= byte;
    h *= kFnvPrime;
}

clockid_t Clock() {
    static const clockid_t clock = [] {
        timespec res{};
        return clock_getres(CLOCK_THREAD_CPUTIME_ID, &res) == 0 ? CLOCK_THREAD_CPUTIME_ID : CLOCK_MONOTONIC;
    }();
    return clock;
}

std::uint64_t NowNs() {
    timespec ts{};
    clock_gettime(Clock(), &ts);
    return static_cast<std::uint64_t>(ts.tv_sec) * 1'000'000'000ull + static_cast<std::uint64_t>(ts.tv_nsec);
}

// Everything one worker touches: its own copies, prepared before timing.
struct Worker {
    ObliviousForest forest;
    PaddedArena arena;
    BitMatrix input_bits;
    BitMatrix out_bits;
    std::vector<std::uint64_t> out_sums;
    std::vector<double> samples;
    std::uint64_t checksum = 0;
};

class Job {
public:
    Job(const FeatureMatrix& features, const ObliviousForest& forest, const StrategyConfig& config, Phase phase,
        const ExecPolicy& policy)
        : features_(features), forest_(forest), config_(config), phase_(phase), policy_(policy) {
        config_.check_compatible();
        if (features.num_features() != forest.num_float_features) {
            throw DimensionError("documents have " + std::to_string(features.num_features()) +
                                 " float features, forest expects " + std::to_string(forest.num_float_features));
        }
    }

    void prepare(Worker& w) const {
        w.forest = forest_;
        const BinarizeKernel kernel = config_.binarize;
        w.arena = pad_arena(features_, kernel.arena_block_docs(), kernel.input_orientation());
        if (phase_ == Phase::apply) {
            w.input_bits = binarize(w.arena, w.forest, kernel, policy_);
            if (config_.apply == ApplyKind::naive && w.input_bits.layout() != BitLayout::ordered) {
                w.input_bits = canonicalize(w.input_bits);
            }
        }
    }

    void run(Worker& w) const {
        switch (phase_) {
            case Phase::binarize:
                w.out_bits = binarize(w.arena, w.forest, config_.binarize, policy_);
                break;
            case Phase::apply:
                w.out_sums = apply_config(w.input_bits, w.forest, config_, policy_);
                break;
            case Phase::end_to_end:
                w.out_sums = apply_config(binarize(w.arena, w.forest, config_.binarize, policy_), w.forest, config_,
                                          policy_);
                break;
        }
    }

    std::uint64_t checksum(const Worker& w) const {
        return phase_ == Phase::binarize ? checksum_bits(w.out_bits) : checksum_sums(w.out_sums);
    }

private:
    const FeatureMatrix& features_;
    const ObliviousForest& forest_;
    StrategyConfig config_;
    Phase phase_;
    ExecPolicy policy_;
};

std::size_t Calibrate(const Job& job, Worker& w, std::uint64_t min_sample_ns) {
    job.run(w);  // warm-up
    std::size_t inner = 1;
    for (int round = 0; round < 2; ++round) {
        const std::uint64_t t0 = NowNs();
        for (std::size_t i = 0; i < inner; ++i) job.run(w);
        const std::uint64_t per_call = std::max<std::uint64_t>(1, (NowNs() - t0) / inner);
        inner = std::clamp<std::size_t>((min_sample_ns + per_call - 1) / per_call, 1, 1'000'000);
    }
    return inner;
}

struct Attempt {
    double mean = 0;
    double stddev = 0;
    std::uint64_t checksum = 0;
};

Attempt Measure(const Job& job, std::vector<Worker>& workers, unsigned reps, std::size_t inner) {
    std::barrier start(static_cast<std::ptrdiff_t>(workers.size()));
    auto body = [&](Worker& w) {
        w.samples.assign(reps, 0.0);
        start.arrive_and_wait();
        for (unsigned r = 0; r < reps; ++r) {
            const std::uint64_t t0 = NowNs();
            for (std::size_t i = 0; i < inner; ++i) job.run(w);
            w.samples[r] = static_cast<double>(NowNs() - t0) / static_cast<double>(inner);
        }
        w.checksum = job.checksum(w);
    };
    std::vector<std::thread> threads;
    threads.reserve(workers.size());
    for (auto& w : workers) threads.emplace_back(body, std::ref(w));
    for (auto& t : threads) t.join();

    Attempt out;
    out.checksum = workers.front().checksum;
    double sum = 0;
    std::size_t n = 0;
    for (const auto& w : workers) {
        if (w.checksum != out.checksum) throw Error("workers disagree on the output checksum");
        for (double s : w.samples) sum += s;
        n += w.samples.size();
    }
    out.mean = sum / static_cast<double>(n);
    double sq = 0;
    for (const auto& w : workers) {
        for (double s : w.samples) sq += (s - out.mean) * (s - out.mean);
    }
    out.stddev = std::sqrt(sq / static_cast<double>(n));
    return out;
}

std::string FormatDouble(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
    if (ec != std::errc()) throw Error("cannot format timing value");
    return {buf, ptr};
}

std::vector<std::string_view> SplitCsv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t begin = 0;
    while (true) {
        const auto comma = line.find(',', begin);
        fields.push_back(line.substr(begin, comma - begin));
        if (comma == std::string_view::npos) break;
        begin = comma + 1;
    }
    return fields;
}

template <typename T>
T ParseField(std::string_view text, std::size_t line_no, const char* name) {
    T value{};
    const auto* end = text.data() + text.size();
    std::from_chars_result r;
    if constexpr (std::is_floating_point_v<T>) {
        r = std::from_chars(text.data(), end, value, std::chars_format::fixed);
    } else {
        r = std::from_chars(text.data(), end, value);
    }
    if (r.ec != std::errc() || r.ptr != end || text.empty()) {
        throw Error("csv line " + std::to_string(line_no) + ": bad " + name + " '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace

std::string ToString(Phase phase) {
    switch (phase) {
        case Phase::binarize: return "binarize";
        case Phase::apply: return "apply";
        case Phase::end_to_end: return "end-to-end";
    }
    return "unknown";
}

Phase parse_phase(std::string_view text) {
    for (auto p : {Phase::binarize, Phase::apply, Phase::end_to_end}) {
        if (text == ToString(p)) return p;
    }
    throw ConfigError("unknown phase '" + std::string(text) + "' (binarize, apply, end-to-end)");
}

std::string ToString(GateState state) {
    switch (state) {
        case GateState::passed: return "pass";
        case GateState::failed: return "fail";
        case GateState::skipped: return "skip";
    }
    return "unknown";
}

GateState parse_gate_state(std::string_view text) {
    for (auto s : {GateState::passed, GateState::failed, GateState::skipped}) {
        if (text == ToString(s)) return s;
    }
    throw ConfigError("unknown gate state '" + std::string(text) + "'");
}

const char* timing_clock() { return Clock() == CLOCK_THREAD_CPUTIME_ID ? "thread_cpu" : "wall"; }

std::uint64_t checksum_bits(const BitMatrix& bits) {
    const BitMatrix canonical = bits.layout() == BitLayout::ordered ? bits : canonicalize(bits);
    const std::size_t docs = canonical.logical_docs();
    const std::size_t full = docs / 8;
    const unsigned tail = docs % 8;
    std::uint64_t h = kFnvOffset;
    for (std::size_t k = 0; k < canonical.num_features(); ++k) {
        const auto row = canonical.row(k);
        for (std::size_t b = 0; b < full; ++b) Fnv(h, row[b]);
        if (tail != 0) Fnv(h, static_cast<std::uint8_t>(row[full] & ((1u << tail) - 1)));
    }
    return h;
}

std::uint64_t checksum_sums(std::span<const std::uint64_t> sums) {
    std::uint64_t h = kFnvOffset;
    for (std::uint64_t s : sums) {
        for (int i = 0; i < 8; ++i) Fnv(h, static_cast<std::uint8_t>(s >> (8 * i)));
    }
    return h;
}

BenchRecord run_bench(const FeatureMatrix& features, const ObliviousForest& forest, const StrategyConfig& config,
                      Phase phase, const BenchOptions& options) {
    if (options.threads == 0 || options.reps == 0) throw ConfigError("threads and reps must be >= 1");
    require_valid(forest);
    const Job job(features, forest, config, phase, options.policy);

    std::vector<Worker> workers(options.threads);
    for (auto& w : workers) job.prepare(w);
    const std::size_t inner = Calibrate(job, workers.front(), options.min_sample_ns);

    BenchRecord record;
    record.config = config.id();
    record.phase = phase;
    record.docs = features.num_docs();
    record.threads = options.threads;
    record.reps = options.reps;

    const unsigned attempts = options.gate ? std::max(1u, options.retry_cap) : 1;
    for (unsigned a = 0; a < attempts; ++a) {
        const Attempt m = Measure(job, workers, options.reps, inner);
        record.mean_ns = m.mean;
        record.stddev_ns = m.stddev;
        record.checksum = m.checksum;
        if (!options.gate) {
            record.stable = GateState::skipped;
            break;
        }
        const bool ok = m.mean == 0 || m.stddev <= options.max_cv * m.mean;
        record.stable = ok ? GateState::passed : GateState::failed;
        if (ok) break;
    }
    return record;
}

BenchRecord run_bench(const std::string& model_path, const std::string& docs_path, const StrategyConfig& config,
                      Phase phase, const BenchOptions& options) {
    const ObliviousForest forest = load_forest(model_path);
    const FeatureMatrix features = load_features(docs_path);
    return run_bench(features, forest, config, phase, options);
}

std::vector<BenchRecord> sweep_docs(const FeatureMatrix& features, const ObliviousForest& forest,
                                    const std::vector<StrategyConfig>& configs, Phase phase,
                                    std::span<const std::size_t> doc_counts, const BenchOptions& options) {
    if (doc_counts.empty()) throw ConfigError("empty document range");
    if (!std::is_sorted(doc_counts.begin(), doc_counts.end())) throw ConfigError("document counts must be sorted");
    if (doc_counts.back() > features.num_docs()) {
        throw DimensionError("sweep up to " + std::to_string(doc_counts.back()) + " documents, only " +
                             std::to_string(features.num_docs()) + " available");
    }
    BenchOptions sweep = options;
    sweep.gate = false;
    std::vector<BenchRecord> records;
    records.reserve(doc_counts.size() * configs.size());
    for (std::size_t docs : doc_counts) {
        const FeatureMatrix prefix = features.prefix(docs);
        for (const auto& config : configs) records.push_back(run_bench(prefix, forest, config, phase, sweep));
    }
    return records;
}

std::vector<std::size_t> default_sweep_counts(const ObliviousForest& forest) {
    constexpr std::size_t kSmallModelWork = 20'000;
    if (forest.leaf_answers.size() + forest.num_binary_features() <= kSmallModelWork) return doc_range(1, 1024);
    std::vector<std::size_t> counts = {100, 127, 129, 1000};
    for (std::size_t p = 1; p <= 1024; p *= 2) counts.push_back(p);
    std::sort(counts.begin(), counts.end());
    return counts;
}

std::vector<std::size_t> doc_range(std::size_t first, std::size_t last, std::size_t step) {
    if (step == 0 || first > last) throw ConfigError("empty document range");
    std::vector<std::size_t> out;
    for (std::size_t d = first; d <= last; d += step) out.push_back(d);
    return out;
}

void write_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
    out << "# clock=" << timing_clock() << '\n' << kCsvHeader << '\n';
    for (const auto& r : records) {
        out << r.config << ',' << ToString(r.phase) << ',' << r.docs << ',' << r.threads << ',' << r.reps << ','
            << FormatDouble(r.mean_ns) << ',' << FormatDouble(r.stddev_ns) << ',' << ToString(r.stable) << ','
            << r.checksum << '\n';
    }
}

std::vector<BenchRecord> read_csv(std::istream& in) {
    std::vector<BenchRecord> records;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            if (line != kCsvHeader) throw Error("csv line " + std::to_string(line_no) + ": unexpected header");
            header = true;
            continue;
        }
        const auto f = SplitCsv(line);
        if (f.size() != 9) throw Error("csv line " + std::to_string(line_no) + ": expected 9 fields");
        BenchRecord r;
        r.config = std::string(f[0]);
        r.phase = parse_phase(f[1]);
        r.docs = ParseField<std::size_t>(f[2], line_no, "docs");
        r.threads = ParseField<unsigned>(f[3], line_no, "threads");
        r.reps = ParseField<unsigned>(f[4], line_no, "reps");
        r.mean_ns = ParseField<double>(f[5], line_no, "mean_ns");
        r.stddev_ns = ParseField<double>(f[6], line_no, "stddev_ns");
        r.stable = parse_gate_state(f[7]);
        r.checksum = ParseField<std::uint64_t>(f[8], line_no, "checksum");
        records.push_back(std::move(r));
    }
    if (!header) throw Error("csv has no header line");
    return records;
}

}  // namespace obliv
