#include "cortiplan/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cortiplan/baselines.hpp"
#include "cortiplan/dataset.hpp"
#include "cortiplan/errors.hpp"
#include "cortiplan/eval.hpp"
#include "cortiplan/optimize.hpp"
#include "cortiplan/util.hpp"

namespace fs = std::filesystem;

namespace cortiplan {

const char* kVersion = "0.1.0";

LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("CORTIPLAN_LOG");
        if (!env) return LogLevel::Info;
        std::string v(env);
        if (v == "error") return LogLevel::Error;
        if (v == "warn") return LogLevel::Warn;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

void log_line(LogLevel level, const std::string& msg) {
    static std::mutex mu;
    if (level > log_level()) return;
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << msg << '\n';
}

// --- flat key space ------------------------------------------------------------

namespace {

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    for (auto part : split(v, ',')) {
        long long n;
        if (!parse_int(part, n)) throw ParseError("bad value for " + key + ": " + v);
        out.push_back(static_cast<int>(n));
    }
    if (out.empty()) throw ParseError("empty list for " + key);
    return out;
}

std::vector<double> parse_double_list(const std::string& v, const std::string& key) {
    std::vector<double> out;
    for (auto part : split(v, ',')) {
        double d;
        if (!parse_double(part, d)) throw ParseError("bad value for " + key + ": " + v);
        out.push_back(d);
    }
    if (out.empty()) throw ParseError("empty list for " + key);
    return out;
}

double parse_double_or_throw(const std::string& v, const std::string& key) {
    double d;
    if (!parse_double(v, d)) throw ParseError("bad value for " + key + ": " + v);
    return d;
}

long long parse_int_or_throw(const std::string& v, const std::string& key) {
    long long n;
    if (!parse_int(v, n)) throw ParseError("bad value for " + key + ": " + v);
    return n;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
    return out;
}

std::string join_seeds(const std::vector<std::uint64_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

}  // namespace

bool RunConfig::apply_kv(const std::string& key, const std::string& value) {
    if (key == "anatomy-dir") anatomy_dir = value;
    else if (key == "synth") use_synth = value == "1" || value == "true";
    else if (key == "synth-seed" || key == "seed") synth_seed = parse_int_or_throw(value, key);
    else if (key == "sites") synth.site_count = parse_int_or_throw(value, key);
    else if (key == "vessels") synth.vessel_count = parse_int_or_throw(value, key);
    else if (key == "patch-mm") synth.patch_mm = parse_double_or_throw(value, key);
    else if (key == "thickness-mm") synth.gm_thickness_mm = parse_double_or_throw(value, key);
    else if (key == "voxel-mm") synth.voxel_mm = parse_double_or_throw(value, key);
    else if (key == "kmap-mm") synth.k_map_mm = parse_double_or_throw(value, key);
    else if (key == "amap-deg") synth.a_map_deg = parse_double_or_throw(value, key);
    else if (key == "fold-amp-mm") synth.fold_amplitude_mm = parse_double_or_throw(value, key);
    else if (key == "fold-period-mm") synth.fold_period_mm = parse_double_or_throw(value, key);
    else if (key == "vessel-radius-mm")
        synth.vessel_radius_mm = parse_double_or_throw(value, key);
    else if (key == "dataset") dataset_path = value;
    else if (key == "extent-deg") extent_deg = parse_double_or_throw(value, key);
    else if (key == "limit") limit = parse_int_or_throw(value, key);
    else if (key == "train-count") train_count = parse_int_or_throw(value, key);
    else if (key == "test-count") test_count = parse_int_or_throw(value, key);
    else if (key == "method") method = value;
    else if (key == "n") n_list = parse_int_list(value, key);
    else if (key == "rho-um") rho_list = parse_double_list(value, key);
    else if (key == "seeds") {
        seeds.clear();
        for (auto part : split(value, ','))
            seeds.push_back(parse_int_or_throw(std::string(part), key));
        if (seeds.empty()) throw ParseError("empty seeds list");
    } else if (key == "n-insert") n_insert = parse_int_or_throw(value, key);
    else if (key == "threads-m") threads_m = parse_int_or_throw(value, key);
    else if (key == "thread-spacing-mm")
        thread_spacing_mm = parse_double_or_throw(value, key);
    else if (key == "spread-mode") {
        if (value == "cortical") objective.spread.mode = SpreadModel::Mode::Cortical;
        else if (value == "visual") objective.spread.mode = SpreadModel::Mode::Visual;
        else throw ParseError("spread-mode must be cortical or visual, got " + value);
    } else if (key == "knn-k") objective.knn_k = parse_int_or_throw(value, key);
    else if (key == "lambda-vasc") objective.lambda_vasc = parse_double_or_throw(value, key);
    else if (key == "lambda-cortex") objective.lambda_cortex = parse_double_or_throw(value, key);
    else if (key == "tau-mm") objective.tau_mm = parse_double_or_throw(value, key);
    else if (key == "foveal-beta") objective.foveal_beta = parse_double_or_throw(value, key);
    else if (key == "foveal-sigma-deg")
        objective.foveal_sigma_deg = parse_double_or_throw(value, key);
    else if (key == "lr") objective.learning_rate = parse_double_or_throw(value, key);
    else if (key == "max-iters") objective.max_iters = parse_int_or_throw(value, key);
    else if (key == "tol") objective.tolerance = parse_double_or_throw(value, key);
    else if (key == "batch") objective.batch_size = parse_int_or_throw(value, key);
    else if (key == "out") out_dir = value;
    else if (key == "jobs") jobs = parse_int_or_throw(value, key);
    else if (key == "layout") layout_path = value;
    else return false;
    explicit_keys.insert(key);
    return true;
}

void RunConfig::load_config_file(const std::string& path) {
    std::string content = read_file(path);
    int line_no = 0;
    for (auto raw : split(content, '\n')) {
        ++line_no;
        std::string_view line = strip_cr(raw);
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected key = value");
        auto trim = [](std::string_view s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
            return std::string(s);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!apply_kv(key, value))
            throw ParseError(path + ":" + std::to_string(line_no) + ": unknown key " + key);
    }
}

std::string RunConfig::to_flat() const {
    std::ostringstream out;
    out << "anatomy-dir = " << anatomy_dir << '\n';
    out << "synth = " << (use_synth ? 1 : 0) << '\n';
    out << "synth-seed = " << synth_seed << '\n';
    out << "sites = " << synth.site_count << '\n';
    out << "vessels = " << synth.vessel_count << '\n';
    out << "patch-mm = " << fmt_double(synth.patch_mm) << '\n';
    out << "thickness-mm = " << fmt_double(synth.gm_thickness_mm) << '\n';
    out << "voxel-mm = " << fmt_double(synth.voxel_mm) << '\n';
    out << "kmap-mm = " << fmt_double(synth.k_map_mm) << '\n';
    out << "amap-deg = " << fmt_double(synth.a_map_deg) << '\n';
    out << "fold-amp-mm = " << fmt_double(synth.fold_amplitude_mm) << '\n';
    out << "fold-period-mm = " << fmt_double(synth.fold_period_mm) << '\n';
    out << "vessel-radius-mm = " << fmt_double(synth.vessel_radius_mm) << '\n';
    out << "dataset = " << dataset_path << '\n';
    out << "extent-deg = " << fmt_double(extent_deg) << '\n';
    out << "limit = " << limit << '\n';
    out << "train-count = " << train_count << '\n';
    out << "test-count = " << test_count << '\n';
    out << "method = " << method << '\n';
    out << "n = " << join_ints(n_list) << '\n';
    out << "rho-um = " << join_doubles(rho_list) << '\n';
    out << "seeds = " << join_seeds(seeds) << '\n';
    out << "n-insert = " << n_insert << '\n';
    out << "threads-m = " << threads_m << '\n';
    out << "thread-spacing-mm = " << fmt_double(thread_spacing_mm) << '\n';
    out << "spread-mode = "
        << (objective.spread.mode == SpreadModel::Mode::Cortical ? "cortical" : "visual") << '\n';
    out << "knn-k = " << objective.knn_k << '\n';
    out << "lambda-vasc = " << fmt_double(objective.lambda_vasc) << '\n';
    out << "lambda-cortex = " << fmt_double(objective.lambda_cortex) << '\n';
    out << "tau-mm = " << fmt_double(objective.tau_mm) << '\n';
    out << "foveal-beta = " << fmt_double(objective.foveal_beta) << '\n';
    out << "foveal-sigma-deg = " << fmt_double(objective.foveal_sigma_deg) << '\n';
    out << "lr = " << fmt_double(objective.learning_rate) << '\n';
    out << "max-iters = " << objective.max_iters << '\n';
    out << "tol = " << fmt_double(objective.tolerance) << '\n';
    out << "batch = " << objective.batch_size << '\n';
    out << "jobs = " << jobs << '\n';
    return out.str();
}

void RunConfig::validate() const {
    if (use_synth && !anatomy_dir.empty())
        throw std::invalid_argument("exactly one anatomy source: --anatomy-dir or --synth");
    for (int n : n_list)
        if (n < 1) throw std::invalid_argument("N must be >= 1");
    if (seeds.empty()) throw std::invalid_argument("seeds must be non-empty");
    if (method != "percept" && method != "tiling" && method != "coverage" &&
        method != "threads")
        throw std::invalid_argument("unknown method: " + method);
}

AnatomyModel resolve_anatomy(const RunConfig& config) {
    if (config.use_synth) {
        SynthParams params = config.synth;
        params.visual_extent = Extent{config.extent_deg, config.extent_deg};
        log_line(LogLevel::Info, "generating synthetic anatomy (seed " +
                                     std::to_string(config.synth_seed) + ")");
        return synth_anatomy(params, config.synth_seed);
    }
    if (config.anatomy_dir.empty())
        throw std::invalid_argument("an anatomy source is required: --anatomy-dir or --synth");
    log_line(LogLevel::Info, "loading anatomy from " + config.anatomy_dir);
    return load_anatomy_dir(config.anatomy_dir, config.synth.voxel_mm);
}

// --- manifest --------------------------------------------------------------------

namespace {

std::string iso_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct ManifestBuilder {
    nlohmann::json j;
    std::vector<std::string> outputs;

    explicit ManifestBuilder(const RunConfig& config) {
        j["artifact_version"] = kVersion;
        j["started"] = iso_timestamp();
        j["config"] = config.to_flat();
        if (!config.anatomy_dir.empty()) {
            for (const char* f :
                 {"retinotopy.csv", "vessels.csv", "gm_mask.raw", "gm_mask.raw.meta"}) {
                std::string path = config.anatomy_dir + "/" + f;
                if (fs::exists(path))
                    j["input_hashes"][path] = fmt_hash(hash_file(path));
            }
        }
        if (!config.dataset_path.empty() && fs::exists(config.dataset_path) &&
            fs::is_regular_file(config.dataset_path))
            j["input_hashes"][config.dataset_path] = fmt_hash(hash_file(config.dataset_path));
    }

    static std::string fmt_hash(std::uint64_t h) {
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    void add_output(const std::string& path) { outputs.push_back(path); }

    void write(const std::string& path) {
        j["finished"] = iso_timestamp();
        for (const std::string& out : outputs)
            j["outputs"][out] = fmt_hash(hash_file(out));
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + path);
        out << j.dump(2) << '\n';
    }
};

ObjectiveConfig cell_objective(const RunConfig& config, int n, double rho, std::uint64_t seed) {
    ObjectiveConfig obj = config.objective;
    obj.n_electrodes = n;
    obj.spread.rho = rho;
    obj.seed = seed;
    // baselines compare unconstrained unless weights were set explicitly
    if ((config.method == "tiling" || config.method == "coverage")) {
        if (!config.explicit_keys.count("lambda-vasc")) obj.lambda_vasc = 0.0;
        if (!config.explicit_keys.count("lambda-cortex")) obj.lambda_cortex = 0.0;
    }
    return obj;
}

std::string cell_dir(const RunConfig& config, int n, double rho) {
    std::ostringstream ss;
    ss << config.method << "_n" << n << "_rho" << fmt_double(rho);
    return (fs::path(config.out_dir) / ss.str()).string();
}

}  // namespace

// --- subcommands -------------------------------------------------------------------

int cmd_synth(const RunConfig& config) {
    SynthParams params = config.synth;
    params.visual_extent = Extent{config.extent_deg, config.extent_deg};
    AnatomyModel anatomy = synth_anatomy(params, config.synth_seed);
    fs::create_directories(config.out_dir);
    save_anatomy_dir(anatomy, config.out_dir);
    std::cout << "sites " << anatomy.sites().size() << "\n"
              << "vessel_segments " << anatomy.vessels().segments.size() << "\n"
              << "grid " << anatomy.gm_sdf().dims[0] << "x" << anatomy.gm_sdf().dims[1] << "x"
              << anatomy.gm_sdf().dims[2] << "\n";
    return kExitOk;
}

namespace {

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    EvaluationReport report;
};

struct CellOutcome {
    int n = 0;
    double rho = 0.0;
    std::vector<SeedOutcome> seeds;
};

void run_cell(const RunConfig& config, const AnatomyModel& anatomy,
              const std::vector<TargetImage>& train, const std::vector<TargetImage>& test,
              int n, double rho, CellOutcome& outcome, ManifestBuilder& manifest,
              std::mutex& manifest_mu) {
    std::string dir = cell_dir(config, n, rho);
    fs::create_directories(dir);
    outcome.n = n;
    outcome.rho = rho;

    nlohmann::json summary;
    summary["method"] = config.method;
    summary["mode"] = config.method == "threads" ? "threads" : "free";
    summary["n"] = n;
    summary["rho_um"] = rho;
    std::vector<double> seed_mse_medians, seed_ssim_medians;

    for (std::uint64_t seed : config.seeds) {
        SeedOutcome so;
        so.seed = seed;
        try {
            ObjectiveConfig obj = cell_objective(config, n, rho, seed);
            ElectrodeLayout layout;
            OptimizationTrace trace;
            if (config.method == "percept") {
                OptimizeResult res = optimize_placement(anatomy, train, obj);
                layout = res.layout;
                trace = res.trace;
            } else if (config.method == "coverage") {
                OptimizeResult res = coverage_layout(anatomy, train, n, obj);
                layout = res.layout;
                trace = res.trace;
            } else if (config.method == "tiling") {
                layout = tiling_layout(anatomy, n);
            } else {  // threads
                OptimizeResult res = optimize_threads(anatomy, train, obj, config.n_insert,
                                                      config.threads_m,
                                                      config.thread_spacing_mm);
                layout = res.layout;
                trace = res.trace;
            }

            std::string tag = "_seed" + std::to_string(seed);
            std::string layout_path = dir + "/layout" + tag + ".csv";
            std::string trace_path = dir + "/trace" + tag + ".csv";
            std::string report_path = dir + "/report" + tag + ".json";
            save_layout_csv(layout, layout_path);
            save_trace_csv(trace, trace_path);

            EvaluationReport report = evaluate_layout(anatomy, layout, test, obj);
            report.method = config.method;
            report.dataset = fs::path(config.dataset_path).filename().string();
            report.seed = seed;
            report.config_echo = config.to_flat();
            save_report_json(report, report_path);

            ViolationCount vc = count_violations(layout, anatomy, obj.tau_mm);
            nlohmann::json js;
            js["seed"] = seed;
            js["layout"] = layout_path;
            js["trace"] = trace_path;
            js["report"] = report_path;
            js["iterations"] = trace.rows.size();
            js["violations"] = vc.count;
            js["min_vessel_distance_mm"] =
                std::isinf(vc.min_distance) ? -1.0 : vc.min_distance;
            js["mse_median"] = report.mse_agg.median;
            js["ssim_median"] = report.ssim_agg.median;
            if (!trace.rows.empty()) {
                js["final"] = {{"percept", trace.rows.back().breakdown.percept},
                               {"vasc", trace.rows.back().breakdown.vasc},
                               {"cortex", trace.rows.back().breakdown.cortex},
                               {"total", trace.rows.back().breakdown.total}};
            }
            summary["seeds"].push_back(js);
            seed_mse_medians.push_back(report.mse_agg.median);
            seed_ssim_medians.push_back(report.ssim_agg.median);

            {
                std::lock_guard<std::mutex> lock(manifest_mu);
                manifest.add_output(layout_path);
                manifest.add_output(trace_path);
                manifest.add_output(report_path);
            }
            so.ok = true;
            so.report = report;
            log_line(LogLevel::Info, "done " + dir + " seed " + std::to_string(seed) +
                                         " (mse_median " + fmt_double(report.mse_agg.median) +
                                         ", violations " + std::to_string(vc.count) + ")");
        } catch (const std::exception& e) {
            so.ok = false;
            so.error = e.what();
            log_line(LogLevel::Error, "seed " + std::to_string(seed) + " failed: " + e.what());
        }
        outcome.seeds.push_back(std::move(so));
    }

    summary["mse_median_across_seeds"] = aggregate_metric(seed_mse_medians).median;
    summary["ssim_median_across_seeds"] = aggregate_metric(seed_ssim_medians).median;
    std::string summary_path = dir + "/summary.json";
    {
        std::ofstream out(summary_path, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + summary_path);
        out << summary.dump(2) << '\n';
    }
    std::lock_guard<std::mutex> lock(manifest_mu);
    manifest.add_output(summary_path);
}

}  // namespace

int cmd_optimize(const RunConfig& config) {
    config.validate();
    AnatomyModel anatomy = resolve_anatomy(config);
    if (config.dataset_path.empty()) throw std::invalid_argument("--dataset is required");
    Extent extent{config.extent_deg, config.extent_deg};
    std::vector<TargetImage> dataset = load_dataset(config.dataset_path, extent, config.limit);

    int train_n = std::min<int>(config.train_count, dataset.size());
    std::vector<TargetImage> train(dataset.begin(), dataset.begin() + train_n);
    int test_n = std::min<int>(config.test_count, dataset.size() - train_n);
    std::vector<TargetImage> test(dataset.begin() + train_n,
                                  dataset.begin() + train_n + test_n);
    if (test.empty()) test = train;  // tiny datasets evaluate on the training split
    log_line(LogLevel::Info, "dataset: " + std::to_string(train.size()) + " train / " +
                                 std::to_string(test.size()) + " test");

    fs::create_directories(config.out_dir);
    ManifestBuilder manifest(config);
    std::mutex manifest_mu;

    struct Cell {
        int n;
        double rho;
    };
    std::vector<Cell> cells;
    for (int n : config.n_list)
        for (double rho : config.rho_list) cells.push_back({n, rho});

    std::vector<CellOutcome> outcomes(cells.size());
    int jobs = std::max(1, config.jobs);
    if (jobs == 1) {
        for (std::size_t c = 0; c < cells.size(); ++c)
            run_cell(config, anatomy, train, test, cells[c].n, cells[c].rho, outcomes[c],
                     manifest, manifest_mu);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < std::min<std::size_t>(jobs, cells.size()); ++t) {
            pool.emplace_back([&] {
                while (true) {
                    std::size_t c = next.fetch_add(1);
                    if (c >= cells.size()) break;
                    run_cell(config, anatomy, train, test, cells[c].n, cells[c].rho,
                             outcomes[c], manifest, manifest_mu);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    manifest.write((fs::path(config.out_dir) / "manifest.json").string());

    int failures = 0;
    for (const CellOutcome& cell : outcomes)
        for (const SeedOutcome& so : cell.seeds)
            if (!so.ok) {
                ++failures;
                std::cerr << "FAILED n=" << cell.n << " rho=" << cell.rho << " seed=" << so.seed
                          << ": " << so.error << '\n';
            }
    return failures == 0 ? kExitOk : kExitFailure;
}

int cmd_evaluate(const RunConfig& config) {
    AnatomyModel anatomy = resolve_anatomy(config);
    if (config.layout_path.empty()) throw std::invalid_argument("--layout is required");
    if (config.dataset_path.empty()) throw std::invalid_argument("--dataset is required");
    ElectrodeLayout layout = load_layout_csv(config.layout_path);
    Extent extent{config.extent_deg, config.extent_deg};
    std::vector<TargetImage> dataset = load_dataset(config.dataset_path, extent, config.limit);

    ObjectiveConfig obj = config.objective;
    obj.spread.rho = config.rho_list.front();
    EvaluationReport report = evaluate_layout(anatomy, layout, dataset, obj);
    report.method = config.method;
    report.config_echo = config.to_flat();

    fs::path out = config.out_dir;
    if (fs::is_directory(out) || out.extension() != ".json") {
        fs::create_directories(out);
        out /= "report.json";
    }
    save_report_json(report, out.string());
    std::cout << "mse_median " << report.mse_agg.median << "\n"
              << "ssim_median " << report.ssim_agg.median << "\n"
              << "violations " << report.violations << "\n";
    return kExitOk;
}

int cmd_render(const RunConfig& config) {
    AnatomyModel anatomy = resolve_anatomy(config);
    if (config.layout_path.empty()) throw std::invalid_argument("--layout is required");
    if (config.dataset_path.empty()) throw std::invalid_argument("--dataset is required");
    ElectrodeLayout layout = load_layout_csv(config.layout_path);
    Extent extent{config.extent_deg, config.extent_deg};
    std::vector<TargetImage> dataset = load_dataset(config.dataset_path, extent, config.limit);

    ObjectiveConfig obj = config.objective;
    obj.spread.rho = config.rho_list.front();
    fs::create_directories(config.out_dir);
    std::vector<Vec3> positions = derive_positions(layout);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        PerceptImage p = render_percept_positions(positions, anatomy, dataset[i], obj);
        char name[64];
        std::snprintf(name, sizeof(name), "percept_%04zu", i);
        save_pgm(p, (fs::path(config.out_dir) / (std::string(name) + ".pgm")).string());
        save_raw_float(p, (fs::path(config.out_dir) / (std::string(name) + ".raw")).string());
    }
    std::cout << "rendered " << dataset.size() << " percepts to " << config.out_dir << "\n";
    return kExitOk;
}

int cmd_compare(const std::vector<std::string>& report_paths, const std::string& out_path) {
    if (report_paths.size() < 2)
        throw std::invalid_argument("compare needs at least two report files");
    std::vector<EvaluationReport> reports;
    for (const std::string& p : report_paths) reports.push_back(load_report_json(p));

    nlohmann::json j;
    std::ostringstream table;
    table << "baseline             dataset              dMSE% [IQR]               dSSIM% [IQR]\n";
    for (std::size_t b = 1; b < reports.size(); ++b) {
        ComparisonResult cmp = compare_methods(reports[0], reports[b]);
        std::string name = reports[b].method.empty()
                               ? fs::path(report_paths[b]).stem().string()
                               : reports[b].method;
        std::string ds = reports[b].dataset.empty() ? "-" : reports[b].dataset;
        nlohmann::json row;
        row["baseline"] = name;
        row["dataset"] = ds;
        row["mse"] = {{"median_pct", cmp.mse.median_pct},
                      {"iqr", {cmp.mse.iqr_lo, cmp.mse.iqr_hi}},
                      {"W", cmp.mse.test.statistic},
                      {"p", cmp.mse.test.p_value},
                      {"significant", cmp.mse.significant}};
        row["ssim"] = {{"median_pct", cmp.ssim.median_pct},
                       {"iqr", {cmp.ssim.iqr_lo, cmp.ssim.iqr_hi}},
                       {"W", cmp.ssim.test.statistic},
                       {"p", cmp.ssim.test.p_value},
                       {"significant", cmp.ssim.significant}};
        j["rows"].push_back(row);

        char line[256];
        std::snprintf(line, sizeof(line),
                      "%-20s %-18s %8.1f%s [%7.1f,%7.1f] %9.1f%s [%7.1f,%7.1f]\n", name.c_str(),
                      ds.c_str(), cmp.mse.median_pct, cmp.mse.significant ? "*" : " ",
                      cmp.mse.iqr_lo, cmp.mse.iqr_hi, cmp.ssim.median_pct,
                      cmp.ssim.significant ? "*" : " ", cmp.ssim.iqr_lo, cmp.ssim.iqr_hi);
        table << line;
    }

    fs::path out = out_path.empty() ? fs::path("comparison.json") : fs::path(out_path);
    {
        std::ofstream f(out, std::ios::binary);
        if (!f) throw IoError("cannot open for writing: " + out.string());
        f << j.dump(2) << '\n';
    }
    fs::path txt = out;
    txt.replace_extension(".txt");
    {
        std::ofstream f(txt, std::ios::binary);
        if (!f) throw IoError("cannot open for writing: " + txt.string());
        f << table.str();
    }
    std::cout << table.str();
    return kExitOk;
}

// --- argv handling ------------------------------------------------------------------

namespace {

int dispatch(const std::string& cmd, RunConfig& config,
             const std::vector<std::string>& positional) {
    if (cmd == "synth") return cmd_synth(config);
    if (cmd == "optimize") return cmd_optimize(config);
    if (cmd == "baseline") {
        if (config.method == "percept" || config.method == "threads")
            throw std::invalid_argument("baseline requires --method tiling or coverage");
        return cmd_optimize(config);
    }
    if (cmd == "evaluate") return cmd_evaluate(config);
    if (cmd == "render") return cmd_render(config);
    if (cmd == "compare") {
        std::string out = config.explicit_keys.count("out") ? config.out_dir : "";
        return cmd_compare(positional, out);
    }
    throw std::invalid_argument("unknown subcommand: " + cmd);
}

void print_usage() {
    std::cout <<
        "cortiplan " << kVersion << " - percept-aware electrode placement planning\n"
        "\n"
        "usage: cortiplan <subcommand> [--key value ...]\n"
        "\n"
        "subcommands:\n"
        "  synth      generate synthetic anatomy files (--out DIR)\n"
        "  optimize   run placement optimization (--method percept|tiling|coverage|threads)\n"
        "  baseline   run a baseline placement (--method tiling|coverage)\n"
        "  evaluate   score a layout CSV against a dataset (--layout, --dataset)\n"
        "  render     export percepts as PGM/raw floats (--layout, --dataset)\n"
        "  compare    compare evaluation reports (method.json baseline.json ...)\n"
        "\n"
        "common flags: --anatomy-dir, --synth, --dataset, --extent-deg, --n, --rho-um,\n"
        "  --spread-mode, --knn-k, --lambda-vasc, --lambda-cortex, --tau-mm, --lr,\n"
        "  --max-iters, --tol, --seeds, --method, --threads-m, --thread-spacing-mm,\n"
        "  --n-insert, --out, --jobs, --config FILE\n"
        "\n"
        "CORTIPLAN_LOG=error|warn|info|debug controls verbosity.\n";
}

}  // namespace

int run_cli(int argc, char** argv) {
    try {
        if (argc < 2) {
            print_usage();
            return kExitInvalidArg;
        }
        std::string cmd = argv[1];
        if (cmd == "--help" || cmd == "-h" || cmd == "help") {
            print_usage();
            return kExitOk;
        }
        if (cmd == "--version") {
            std::cout << kVersion << "\n";
            return kExitOk;
        }

        RunConfig config;
        std::vector<std::string> positional;
        // config files apply first so that explicit flags override them
        std::vector<std::pair<std::string, std::string>> flag_kvs;
        for (int i = 2; i < argc; ++i) {
            std::string arg = argv[i];
            if (arg.rfind("--", 0) == 0) {
                std::string key = arg.substr(2);
                std::string value = "1";  // bare flags are booleans
                if (i + 1 < argc && std::string(argv[i + 1]).rfind("--", 0) != 0)
                    value = argv[++i];
                if (key == "config") {
                    config.load_config_file(value);
                } else {
                    flag_kvs.emplace_back(key, value);
                }
            } else {
                positional.push_back(arg);
            }
        }
        for (auto& [key, value] : flag_kvs)
            if (!config.apply_kv(key, value))
                throw std::invalid_argument("unknown flag --" + key);

        return dispatch(cmd, config, positional);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitParseFormat;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitParseFormat;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const InfeasibleError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalidArg;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace cortiplan
