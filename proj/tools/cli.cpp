#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "obliv/bench.hpp"
#include "obliv/error.hpp"
#include "obliv/pipeline.hpp"

namespace obliv {

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

struct DocSource {
    std::string docs_file;
    std::size_t gen_docs = 0;
    std::uint64_t seed = 1;

    FeatureMatrix load(const ObliviousForest& forest) const {
        if (!docs_file.empty()) return load_features(docs_file);
        if (gen_docs == 0) throw UsageError("need --docs-file or --gen-docs D");
        return generate_features(gen_docs, forest.num_float_features, seed);
    }
};

struct Selection {
    std::vector<std::string> configs;
    std::string config_file;
    std::string force_tier;

    std::vector<StrategyConfig> resolve(bool default_all) const {
        std::vector<StrategyConfig> out;
        for (const auto& id : configs) out.push_back(StrategyConfig::parse(id));
        if (!config_file.empty()) out.push_back(StrategyConfig::load_file(config_file));
        if (out.empty()) {
            if (!default_all) throw UsageError("need at least one --config or --config-file");
            out = shipped_configs();
        }
        return out;
    }

    CapabilitySet caps() const {
        if (force_tier.empty()) return detect_capabilities();
        if (!tier_override(force_tier)) throw UsageError("--force-tier must be scalar, 128, 256 or 512");
        return apply_override(hardware_capabilities(), force_tier, true);
    }
};

void AddDocs(CLI::App* cmd, DocSource& docs) {
    auto* file = cmd->add_option("--docs-file", docs.docs_file, "Feature matrix file (OBFX)");
    auto* gen = cmd->add_option("--gen-docs", docs.gen_docs, "Generate D random documents instead");
    file->excludes(gen);
    cmd->add_option("--seed", docs.seed, "Seed for generated documents");
}

void AddSelection(CLI::App* cmd, Selection& sel) {
    cmd->add_option("--config", sel.configs, "Strategy id <kernel>:<apply>[@width] (repeatable)");
    cmd->add_option("--config-file", sel.config_file, "key=value strategy file")->check(CLI::ExistingFile);
    cmd->add_option("--force-tier", sel.force_tier, "Capability override: scalar|128|256|512");
}

void WriteRecords(const std::vector<BenchRecord>& records, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        write_csv(out, records);
        return;
    }
    std::ofstream file(path);
    if (!file) throw Error("cannot write " + path);
    write_csv(file, records);
}

std::vector<std::size_t> ParseRange(const std::string& text) {
    std::vector<std::size_t> parts;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        const auto colon = text.find(':', begin);
        const std::string piece = text.substr(begin, colon == std::string::npos ? std::string::npos : colon - begin);
        try {
            std::size_t used = 0;
            parts.push_back(std::stoull(piece, &used));
            if (used != piece.size()) throw std::invalid_argument(piece);
        } catch (const std::exception&) {
            throw UsageError("--docs-range expects first:last[:step], got '" + text + "'");
        }
        if (colon == std::string::npos) break;
        begin = colon + 1;
    }
    if (parts.size() < 2 || parts.size() > 3 || parts[0] == 0) {
        throw UsageError("--docs-range expects first:last[:step] with first >= 1");
    }
    return doc_range(parts[0], parts[1], parts.size() == 3 ? parts[2] : 1);
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Oblivious forest inference kernels: generation, verification, benchmarks", "obliv"};
    app.require_subcommand(1);

    // gen-model
    auto* gen_model = app.add_subcommand("gen-model", "Write a random forest");
    std::string model_out;
    SyntheticSpec spec;
    spec.num_binary_features = 100;
    spec.trees_per_height.fill(10);
    std::vector<std::uint32_t> stc;
    double scale = 1.0;
    double bias = 0.0;
    gen_model->add_option("--out", model_out, "Output path")->required();
    gen_model->add_option("--seed", spec.seed, "Generator seed");
    gen_model->add_option("--float-features", spec.num_float_features, "F")->check(CLI::PositiveNumber);
    gen_model->add_option("--binary-features", spec.num_binary_features, "K");
    gen_model->add_option("--trees-per-height", stc, "Nine counts for heights 0..8")->delimiter(',')->expected(9);
    gen_model->add_option("--scale", scale, "Score scale S");
    gen_model->add_option("--bias", bias, "Score bias B");

    // gen-docs
    auto* gen_docs = app.add_subcommand("gen-docs", "Write random documents");
    std::string docs_out;
    std::size_t doc_count = 0;
    std::uint32_t doc_features = 0;
    std::string docs_model;
    std::uint64_t docs_seed = 1;
    bool feature_major = false;
    gen_docs->add_option("--out", docs_out, "Output path")->required();
    gen_docs->add_option("--docs", doc_count, "Number of documents D")->required();
    auto* feat_opt = gen_docs->add_option("--features", doc_features, "Float features F");
    auto* model_opt = gen_docs->add_option("--model", docs_model, "Take F from this forest");
    feat_opt->excludes(model_opt);
    gen_docs->add_option("--seed", docs_seed, "Generator seed");
    gen_docs->add_flag("--feature-major", feature_major, "Store feature-major");

    // verify
    auto* verify = app.add_subcommand("verify", "Check that strategies agree exactly");
    std::string verify_model;
    DocSource verify_src;
    Selection verify_sel;
    verify->add_option("--model", verify_model, "Forest file (OBFV)")->required();
    AddDocs(verify, verify_src);
    AddSelection(verify, verify_sel);

    // bench
    auto* bench = app.add_subcommand("bench", "Time strategies at one document count");
    std::string bench_model;
    DocSource bench_src;
    Selection bench_sel;
    std::string bench_phase = "end-to-end";
    BenchOptions bench_opts;
    std::string bench_out;
    bool no_gate = false;
    std::uint64_t min_sample_us = bench_opts.min_sample_ns / 1000;
    bench->add_option("--model", bench_model, "Forest file (OBFV)")->required();
    AddDocs(bench, bench_src);
    AddSelection(bench, bench_sel);
    bench->add_option("--phase", bench_phase, "binarize | apply | end-to-end");
    bench->add_option("--threads", bench_opts.threads, "Worker threads")->check(CLI::PositiveNumber);
    bench->add_option("--reps", bench_opts.reps, "Samples per attempt")->check(CLI::PositiveNumber);
    bench->add_option("--retry-cap", bench_opts.retry_cap, "Attempts before giving up on stability");
    bench->add_option("--min-sample-us", min_sample_us, "Minimum duration of one sample");
    bench->add_flag("--no-gate", no_gate, "Record the first attempt without the stability gate");
    bench->add_option("--out", bench_out, "CSV path (default stdout)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Time strategies over a range of document counts");
    std::string sweep_model;
    DocSource sweep_src;
    Selection sweep_sel;
    std::string sweep_phase = "end-to-end";
    BenchOptions sweep_opts;
    sweep_opts.reps = 3;
    std::string sweep_out;
    std::string sweep_range;
    std::uint64_t sweep_sample_us = 50;
    sweep->add_option("--model", sweep_model, "Forest file (OBFV)")->required();
    AddDocs(sweep, sweep_src);
    AddSelection(sweep, sweep_sel);
    sweep->add_option("--phase", sweep_phase, "binarize | apply | end-to-end");
    sweep->add_option("--threads", sweep_opts.threads, "Worker threads")->check(CLI::PositiveNumber);
    sweep->add_option("--reps", sweep_opts.reps, "Samples per point")->check(CLI::PositiveNumber);
    sweep->add_option("--docs-range", sweep_range, "first:last[:step] (default depends on model size)");
    sweep->add_option("--min-sample-us", sweep_sample_us, "Minimum duration of one sample");
    sweep->add_option("--out", sweep_out, "CSV path (default stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen_model->parsed()) {
            if (!stc.empty()) std::copy(stc.begin(), stc.end(), spec.trees_per_height.begin());
            ObliviousForest forest = generate_forest(spec);
            forest.scale = scale;
            forest.bias = bias;
            save_forest(model_out, forest);
            out << "wrote " << model_out << ": " << forest.num_trees() << " trees, " << forest.num_binary_features()
                << " binary features\n";
        } else if (gen_docs->parsed()) {
            std::uint32_t f = doc_features;
            if (!docs_model.empty()) f = load_forest(docs_model).num_float_features;
            if (f == 0) throw UsageError("need --features F or --model");
            FeatureMatrix docs = generate_features(doc_count, f, docs_seed);
            if (feature_major) docs = docs.transposed();
            save_features(docs_out, docs);
            out << "wrote " << docs_out << ": " << doc_count << " x " << f << "\n";
        } else if (verify->parsed()) {
            const ObliviousForest forest = load_forest(verify_model);
            const FeatureMatrix docs = verify_src.load(forest);
            const auto configs = verify_sel.resolve(true);
            const EquivalenceReport report =
                verify_equivalence(docs, forest, configs, ExecPolicy::fallback(verify_sel.caps()));
            for (const auto& d : report.divergences) out << "DIVERGENCE " << d.describe() << "\n";
            out << (report.passed() ? "OK" : "FAILED") << ": " << report.configs << " configs, " << docs.num_docs()
                << " docs, " << report.divergences.size() << " divergences\n";
            return report.passed() ? 0 : 1;
        } else if (bench->parsed()) {
            const ObliviousForest forest = load_forest(bench_model);
            const FeatureMatrix docs = bench_src.load(forest);
            const auto configs = bench_sel.resolve(false);
            bench_opts.policy = ExecPolicy{bench_sel.caps(), false};
            bench_opts.gate = !no_gate;
            bench_opts.min_sample_ns = min_sample_us * 1000;
            const Phase phase = parse_phase(bench_phase);
            std::vector<BenchRecord> records;
            for (const auto& config : configs) records.push_back(run_bench(docs, forest, config, phase, bench_opts));
            WriteRecords(records, bench_out, out);
        } else if (sweep->parsed()) {
            const ObliviousForest forest = load_forest(sweep_model);
            DocSource source = sweep_src;
            std::vector<std::size_t> counts =
                sweep_range.empty() ? default_sweep_counts(forest) : ParseRange(sweep_range);
            if (source.docs_file.empty() && source.gen_docs == 0) source.gen_docs = counts.back();
            const FeatureMatrix docs = source.load(forest);
            if (sweep_range.empty()) std::erase_if(counts, [&](std::size_t c) { return c > docs.num_docs(); });
            const auto configs = sweep_sel.resolve(false);
            sweep_opts.policy = ExecPolicy{sweep_sel.caps(), false};
            sweep_opts.min_sample_ns = sweep_sample_us * 1000;
            const auto records = sweep_docs(docs, forest, configs, parse_phase(sweep_phase), counts, sweep_opts);
            WriteRecords(records, sweep_out, out);
        }
    } catch (const UsageError& e) {
        err << "usage: " << e.what() << "\n" << app.help();
        return 2;
    } catch (const ConfigError& e) {
        err << "usage: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

}  // namespace obliv
