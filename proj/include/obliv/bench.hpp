#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "obliv/capabilities.hpp"
#include "obliv/model.hpp"
#include "obliv/pipeline.hpp"

namespace obliv {

enum class Phase { binarize, apply, end_to_end };
std::string ToString(Phase phase);  // binarize | apply | end-to-end
Phase parse_phase(std::string_view text);

enum class GateState { passed, failed, skipped };
std::string ToString(GateState state);  // pass | fail | skip
GateState parse_gate_state(std::string_view text);

struct BenchRecord {
    std::string config;
    Phase phase = Phase::end_to_end;
    std::size_t docs = 0;
    unsigned threads = 1;
    unsigned reps = 0;
    double mean_ns = 0;
    double stddev_ns = 0;
    GateState stable = GateState::skipped;
    std::uint64_t checksum = 0;

    bool operator==(const BenchRecord&) const = default;
};

struct BenchOptions {
    unsigned threads = 1;
    unsigned reps = 10;
    // Attempts before a record is written with stable=fail.
    unsigned retry_cap = 10;
    bool gate = true;
    // stddev / mean must not exceed this for the gate to pass.
    double max_cv = 0.1;
    // Inner iterations per sample are chosen so one sample takes at least this long.
    std::uint64_t min_sample_ns = 200'000;
    ExecPolicy policy;
};

// "thread_cpu" when per-thread CPU clocks exist, "wall" otherwise.
const char* timing_clock();

// FNV-1a over the logical bits of every binary feature, document order.
std::uint64_t checksum_bits(const BitMatrix& bits);
// FNV-1a over the little-endian bytes of each sum.
std::uint64_t checksum_sums(std::span<const std::uint64_t> sums);

// Each worker owns a private copy of documents and forest; padding, transposition
// and (for the apply phase) binarization happen before the clock starts. Retries
// until the gate holds or retry_cap attempts are used.
BenchRecord run_bench(const FeatureMatrix& features, const ObliviousForest& forest, const StrategyConfig& config,
                      Phase phase, const BenchOptions& options = {});
BenchRecord run_bench(const std::string& model_path, const std::string& docs_path, const StrategyConfig& config,
                      Phase phase, const BenchOptions& options = {});

// One record per (doc count, config), doc counts in the given (sorted) order,
// each measured on the first `docs` rows of `features`. The gate is not applied.
std::vector<BenchRecord> sweep_docs(const FeatureMatrix& features, const ObliviousForest& forest,
                                    const std::vector<StrategyConfig>& configs, Phase phase,
                                    std::span<const std::size_t> doc_counts, const BenchOptions& options = {});

// 1..1024 for small models; powers of two up to 1024 plus 100, 127, 129, 1000 otherwise.
std::vector<std::size_t> default_sweep_counts(const ObliviousForest& forest);
// first, first+step, ... up to last inclusive.
std::vector<std::size_t> doc_range(std::size_t first, std::size_t last, std::size_t step = 1);

inline constexpr std::string_view kCsvHeader = "config,phase,docs,threads,reps,mean_ns,stddev_ns,stable,checksum";

// A "# clock=<name>" line, the header, then one line per record.
void write_csv(std::ostream& out, const std::vector<BenchRecord>& records);
std::vector<BenchRecord> read_csv(std::istream& in);

}  // namespace obliv
