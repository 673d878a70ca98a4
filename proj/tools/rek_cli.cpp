// Command-line front end: scene generation/validation, knowledge spectra,
// oracle labels, CNN training, prediction and evaluation.
//
// Exit codes: 0 success, 1 validation/usage error, 2 runtime error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "rek/canonical.hpp"
#include "rek/eval.hpp"
#include "rek/io.hpp"
#include "rek/oracle.hpp"
#include "rek/predictor.hpp"
#include "rek/rek.hpp"
#include "rek/scene.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
    std::optional<std::string> scene_path;
    bool canonical = false;
    std::optional<rek::BooleanModelParams> generate;
    rek::KnowledgeCoefficients coeffs;
    std::string trajectory = "all";
    rek::nn::TrainConfig train;
    std::string out = "out";
    std::uint64_t seed = 0;
    std::size_t top_paths = 25;
};

rek::Point3 point_from(const json& j) { return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()}; }

void apply_config_file(RunConfig& cfg, const fs::path& path) {
    json j;
    try {
        j = json::parse(rek::read_file(path));
    } catch (const json::parse_error& e) {
        throw rek::ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("scene") && !j["scene"].is_null()) cfg.scene_path = j["scene"].get<std::string>();
        if (j.contains("canonical")) cfg.canonical = j["canonical"].get<bool>();
        if (j.contains("generate")) {
            const auto& g = j["generate"];
            rek::BooleanModelParams p;
            if (g.contains("region")) {
                const auto& r = g["region"];
                p.x_min = r.at("x_min").get<double>();
                p.y_min = r.at("y_min").get<double>();
                p.x_max = r.at("x_max").get<double>();
                p.y_max = r.at("y_max").get<double>();
            }
            p.density = g.value("density", p.density);
            p.length_min = g.value("length_min", p.length_min);
            p.length_max = g.value("length_max", p.length_max);
            p.height_min = g.value("height_min", p.height_min);
            p.height_max = g.value("height_max", p.height_max);
            p.frequency_hz = g.value("frequency_hz", p.frequency_hz);
            if (g.contains("tx")) p.tx = point_from(g["tx"]);
            if (g.contains("grid")) {
                const auto& gr = g["grid"];
                rek::GridSpec spec;
                if (gr.contains("origin")) spec.origin = point_from(gr["origin"]);
                spec.rows = gr.value("rows", spec.rows);
                spec.cols = gr.value("cols", spec.cols);
                spec.spacing = gr.value("spacing", spec.spacing);
                spec.height = gr.value("height", spec.height);
                p.grid = spec;
            }
            cfg.generate = p;
        }
        if (j.contains("coefficients")) {
            for (const auto& [k, v] : j["coefficients"].items()) cfg.coeffs.set(k, v.get<double>());
        }
        if (j.contains("trajectory")) {
            cfg.trajectory = j["trajectory"].is_string() ? j["trajectory"].get<std::string>() : j["trajectory"].dump();
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
            cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
            cfg.train.epochs = t.value("epochs", cfg.train.epochs);
            cfg.train.patience = t.value("patience", cfg.train.patience);
            cfg.train.train_fraction = t.value("train_fraction", cfg.train.train_fraction);
        }
        if (j.contains("out")) cfg.out = j["out"].get<std::string>();
        if (j.contains("top_paths")) cfg.top_paths = j["top_paths"].get<std::size_t>();
    } catch (const json::exception& e) {
        throw rek::ParseError(std::string("config schema: ") + e.what());
    }
}

/// Fans the global seed out to every stochastic stage.
void propagate_seed(RunConfig& cfg) {
    cfg.coeffs.rng_seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    if (cfg.generate) cfg.generate->seed = cfg.seed;
}

rek::Scene resolve_scene(const RunConfig& cfg) {
    if (cfg.scene_path) return rek::load_scene(*cfg.scene_path);
    if (cfg.canonical) return rek::canonical_canyon_scene();
    if (cfg.generate) return rek::generate_scene(*cfg.generate);
    throw rek::ValidationError("no scene given: pass --scene, --canonical, or a config with 'generate'");
}

struct Trajectory {
    std::string name;
    std::vector<std::size_t> indices;
};

std::string column_name(int col) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "traj_%03d", col);
    return buf;
}

/// "all", a column index, a comma list of columns, or "rx:i,j,k" for an explicit receiver list.
std::vector<Trajectory> resolve_trajectories(const rek::Scene& scene, const std::string& spec) {
    std::vector<Trajectory> out;
    auto parse_list = [](const std::string& s) {
        std::vector<long> v;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item.erase(std::remove_if(item.begin(), item.end(), [](char c) { return c == ' ' || c == '[' || c == ']'; }),
                       item.end());
            if (item.empty()) continue;
            try {
                v.push_back(std::stol(item));
            } catch (const std::exception&) {
                throw rek::ValidationError("bad trajectory entry '" + item + "'");
            }
        }
        return v;
    };
    if (spec.rfind("rx:", 0) == 0) {
        Trajectory t{"traj_custom", {}};
        for (long i : parse_list(spec.substr(3))) {
            if (i < 0 || static_cast<std::size_t>(i) >= scene.receivers.size()) {
                throw rek::ValidationError("receiver index " + std::to_string(i) + " out of range");
            }
            t.indices.push_back(static_cast<std::size_t>(i));
        }
        if (t.indices.empty()) throw rek::ValidationError("empty receiver list");
        out.push_back(std::move(t));
        return out;
    }
    if (!scene.grid) throw rek::ValidationError("column trajectories need a scene with a receiver grid");
    if (spec == "all") {
        for (int c = 0; c < scene.grid->cols; ++c) out.push_back({column_name(c), rek::grid_column(*scene.grid, c)});
        return out;
    }
    for (long c : parse_list(spec)) {
        out.push_back({column_name(static_cast<int>(c)), rek::grid_column(*scene.grid, static_cast<int>(c))});
    }
    return out;
}

std::string join(const std::vector<int>& ids) { return rek::eval::join_ids(ids); }

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void print_scene_summary(const rek::Scene& scene, const rek::SceneReport& report) {
    double lo[3] = {1e300, 1e300, 1e300};
    double hi[3] = {-1e300, -1e300, -1e300};
    for (const auto& s : scene.scatterers) {
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], s.p_min()[k]);
            hi[k] = std::max(hi[k], s.p_max()[k]);
        }
    }
    std::cout << "scatterers: " << scene.scatterers.size() << "\n";
    if (!scene.scatterers.empty()) {
        std::cout << "bounds: x [" << lo[0] << ", " << hi[0] << "] y [" << lo[1] << ", " << hi[1] << "] z [" << lo[2]
                  << ", " << hi[2] << "]\n";
    }
    std::cout << "receivers: " << scene.receivers.size() << "\n";
    std::cout << "frequency_hz: " << scene.frequency_hz << "\n";
    for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";
}

std::vector<fs::path> stage_scene(const RunConfig& cfg, const rek::Scene& scene) {
    const auto report = rek::validate_scene(scene);
    print_scene_summary(scene, report);
    const fs::path path = fs::path(cfg.out) / "scene.json";
    rek::atomic_write(path, rek::dump_scene(scene));
    return {path};
}

std::vector<fs::path> stage_rek(const RunConfig& cfg, const rek::Scene& scene) {
    std::vector<fs::path> written;
    const fs::path dir = fs::path(cfg.out) / "rek";
    std::ostringstream sidecar;
    sidecar << "trajectory,rx_index,scenario,effective_ids,blockage_ids,impending_ids,dominant_blocker\n";
    for (const auto& t : resolve_trajectories(scene, cfg.trajectory)) {
        rek::REKSpectrum spectrum;
        spectrum.trajectory = t.indices;
        for (std::size_t idx : t.indices) {
            const auto v = rek::construct_rek(scene, idx, cfg.coeffs);
            spectrum.rows.push_back({v.rc, v.dc, v.bc});
            spectrum.scenarios.push_back(v.scenario);
            sidecar << t.name << ',' << idx << ',' << rek::to_string(v.scenario) << ',' << join(v.effective_ids) << ','
                    << join(v.blockage_ids) << ',' << join(v.impending_ids) << ','
                    << (v.dominant_blocker ? std::to_string(*v.dominant_blocker) : "") << '\n';
        }
        const fs::path path = dir / (t.name + ".csv");
        rek::atomic_write(path, rek::spectrum_csv(spectrum));
        written.push_back(path);
    }
    const fs::path side = dir / "classification.csv";
    rek::atomic_write(side, sidecar.str());
    written.push_back(side);
    std::cout << "rek: wrote " << written.size() - 1 << " spectra to " << dir.string() << "\n";
    return written;
}

std::vector<fs::path> stage_oracle(const RunConfig& cfg, const rek::Scene& scene) {
    std::vector<rek::oracle::PathLossSample> samples;
    samples.reserve(scene.receivers.size());
    for (std::size_t i = 0; i < scene.receivers.size(); ++i) samples.push_back(rek::oracle::path_loss(scene, i));
    const fs::path dir = fs::path(cfg.out) / "oracle";
    const fs::path labels = dir / "labels.csv";
    const fs::path paths = dir / "paths.csv";
    rek::atomic_write(labels, rek::oracle::labels_csv(samples));
    rek::atomic_write(paths, rek::oracle::paths_csv(samples));
    std::cout << "oracle: labeled " << samples.size() << " receivers\n";
    return {labels, paths};
}

std::map<std::size_t, double> load_labels(const fs::path& path) {
    std::map<std::size_t, double> m;
    for (const auto& [i, pl] : rek::oracle::parse_labels_csv(rek::read_file(path))) m[i] = pl;
    return m;
}

struct SpectrumFile {
    std::string name;
    rek::REKSpectrum spectrum;
};

std::vector<SpectrumFile> load_spectra(const fs::path& dir, const std::string& trajectory_spec) {
    if (!fs::is_directory(dir)) throw rek::ValidationError("spectra directory " + dir.string() + " not found");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("traj_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<SpectrumFile> out;
    std::vector<std::string> wanted;
    if (trajectory_spec != "all" && trajectory_spec.rfind("rx:", 0) != 0) {
        std::stringstream ss(trajectory_spec);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) wanted.push_back(column_name(std::stoi(item)));
        }
    }
    for (const auto& f : files) {
        const auto stem = f.stem().string();
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), stem) == wanted.end()) continue;
        out.push_back({stem, rek::parse_spectrum_csv(rek::read_file(f))});
    }
    if (out.empty()) throw rek::ValidationError("no spectrum files found in " + dir.string());
    return out;
}

std::vector<rek::nn::Sample> build_dataset(const std::vector<SpectrumFile>& spectra,
                                           const std::map<std::size_t, double>& labels) {
    std::vector<rek::nn::Sample> data;
    for (const auto& s : spectra) {
        rek::nn::Sample sample;
        sample.input = rek::nn::spectrum_tensor(s.spectrum.rows);
        for (std::size_t idx : s.spectrum.trajectory) {
            const auto it = labels.find(idx);
            if (it == labels.end()) throw rek::ValidationError("no label for receiver " + std::to_string(idx));
            sample.target.push_back(it->second);
        }
        data.push_back(std::move(sample));
    }
    return data;
}

std::string hash_file_sha256(const std::string& contents) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(contents.data(), contents.size(), md, &len, EVP_sha256(), nullptr);
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) {
        char b[3];
        std::snprintf(b, sizeof(b), "%02x", md[i]);
        out << b;
    }
    return out.str();
}

std::vector<fs::path> stage_train(const RunConfig& cfg, const fs::path& spectra_dir, const fs::path& labels_path,
                                  std::optional<double>* test_nrmse = nullptr) {
    const auto spectra = load_spectra(spectra_dir, cfg.trajectory);
    const auto data = build_dataset(spectra, load_labels(labels_path));
    rek::nn::Architecture arch;
    arch.height = data.front().input.height;
    arch.outputs = static_cast<int>(data.front().target.size());
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = rek::nn::train(data, arch, cfg.train);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path dir = fs::path(cfg.out) / "model";
    const fs::path model = dir / "model.json";
    const fs::path log = dir / "train_log.csv";
    const fs::path split = dir / "split.csv";
    rek::atomic_write(model, rek::nn::dump_model(result.model));
    rek::atomic_write(log, rek::nn::training_log_csv(result.history));
    std::ostringstream s;
    s << "trajectory,set\n";
    for (std::size_t i : result.split.train) s << spectra[i].name << ",train\n";
    for (std::size_t i : result.split.test) s << spectra[i].name << ",test\n";
    rek::atomic_write(split, s.str());

    const auto& last = result.history.empty() ? rek::nn::EpochLog{} : result.history.back();
    std::cout << "train: " << result.history.size() << " epochs, train NRMSE " << last.train_nrmse << ", test NRMSE "
              << last.test_nrmse << ", " << secs << " s\n";
    if (test_nrmse && !result.split.test.empty()) *test_nrmse = last.test_nrmse;
    return {model, log, split};
}

std::vector<std::string> test_trajectories(const fs::path& split_path) {
    std::vector<std::string> out;
    std::istringstream in(rek::read_file(split_path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma != std::string::npos && line.substr(comma + 1) == "test") out.push_back(line.substr(0, comma));
    }
    return out;
}

std::vector<fs::path> stage_predict(const RunConfig& cfg, const fs::path& model_path, const fs::path& spectra_dir,
                                    const std::optional<fs::path>& split_path) {
    const auto model = rek::nn::load_model(rek::read_file(model_path));
    auto spectra = load_spectra(spectra_dir, cfg.trajectory);
    if (split_path) {
        const auto keep = test_trajectories(*split_path);
        std::erase_if(spectra, [&](const SpectrumFile& s) { return std::find(keep.begin(), keep.end(), s.name) == keep.end(); });
    }
    std::vector<fs::path> written;
    const fs::path dir = fs::path(cfg.out) / "predictions";
    for (const auto& s : spectra) {
        const auto pred = rek::nn::predict(model, rek::nn::spectrum_tensor(s.spectrum.rows));
        std::ostringstream out;
        out << "rx_index,path_loss_db\n";
        for (std::size_t j = 0; j < pred.size(); ++j) {
            out << s.spectrum.trajectory[j] << ',' << rek::format_double(pred[j]) << '\n';
        }
        const fs::path path = dir / (s.name + ".csv");
        rek::atomic_write(path, out.str());
        written.push_back(path);
    }
    std::cout << "predict: wrote " << written.size() << " trajectories\n";
    return written;
}

std::vector<fs::path> stage_eval(const RunConfig& cfg, const fs::path& pred_dir, const fs::path& labels_path,
                                 const rek::Scene* scene) {
    const auto labels = load_labels(labels_path);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(pred_dir)) {
        if (e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw rek::ValidationError("no prediction files in " + pred_dir.string());

    std::vector<std::size_t> rx;
    std::vector<double> pred;
    std::vector<double> truth;
    for (const auto& f : files) {
        std::istringstream in(rek::read_file(f));
        std::string line;
        std::getline(in, line);
        if (line != "rx_index,path_loss_db") throw rek::ParseError("bad prediction header in " + f.string());
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto comma = line.find(',');
            const std::size_t idx = std::stoull(line.substr(0, comma));
            const auto it = labels.find(idx);
            if (it == labels.end()) throw rek::ValidationError("no label for receiver " + std::to_string(idx));
            rx.push_back(idx);
            pred.push_back(std::stod(line.substr(comma + 1)));
            truth.push_back(it->second);
        }
    }

    const fs::path dir = fs::path(cfg.out) / "eval";
    std::vector<fs::path> written;
    const bool identical = pred == truth;
    json metrics;
    metrics["n_predictions"] = pred.size();
    metrics["nrmse"] = identical ? 0.0 : rek::nn::nrmse(pred, truth);

    std::vector<double> abs_err;
    for (std::size_t i = 0; i < pred.size(); ++i) abs_err.push_back(std::abs(pred[i] - truth[i]));
    std::vector<std::pair<std::string, rek::eval::SummaryStats>> stats;
    if (pred.size() >= 4) {
        stats.emplace_back("truth", rek::eval::summary_stats(truth));
        stats.emplace_back("predicted", rek::eval::summary_stats(pred));
        stats.emplace_back("abs_error", rek::eval::summary_stats(abs_err));
        const fs::path p = dir / "stats.csv";
        rek::atomic_write(p, rek::eval::stats_csv(stats));
        written.push_back(p);
    }
    const fs::path cdf_t = dir / "cdf_truth.csv";
    const fs::path cdf_p = dir / "cdf_predicted.csv";
    rek::atomic_write(cdf_t, rek::eval::cdf_csv(rek::eval::empirical_cdf(truth)));
    rek::atomic_write(cdf_p, rek::eval::cdf_csv(rek::eval::empirical_cdf(pred)));
    written.push_back(cdf_t);
    written.push_back(cdf_p);

    if (scene) {
        std::vector<rek::eval::AccuracyReport> reports;
        std::map<std::string, std::pair<double, int>> by_scenario;
        for (std::size_t idx : rx) {
            if (idx >= scene->receivers.size()) continue;
            const auto v = rek::construct_rek(*scene, idx, cfg.coeffs);
            const auto sample = rek::oracle::path_loss(*scene, idx);
            const auto real = rek::oracle::rank_scatterers_by_power(sample, cfg.top_paths);
            const auto selected = v.contributing_ids();
            reports.push_back(rek::eval::selection_accuracy(selected, real, idx));
            auto& agg = by_scenario[rek::to_string(v.scenario)];
            agg.first += reports.back().percent();
            agg.second += 1;
        }
        const fs::path p = dir / "accuracy.csv";
        rek::atomic_write(p, rek::eval::accuracy_csv(reports));
        written.push_back(p);
        for (const auto& [name, agg] : by_scenario) metrics["mean_accuracy_percent"][name] = agg.first / agg.second;
    }
    const fs::path m = dir / "metrics.json";
    rek::atomic_write(m, metrics.dump(2) + "\n");
    written.push_back(m);
    std::cout << "eval: NRMSE " << metrics["nrmse"].get<double>() << " over " << pred.size() << " receivers\n";
    return written;
}

/// Hash with the named CSV columns blanked, for files carrying wall-clock timings.
std::string masked_csv(const std::string& contents, const std::vector<std::string>& columns) {
    std::istringstream in(contents);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string h;
        while (std::getline(ss, h, ',')) header.push_back(h);
    }
    std::ostringstream out;
    out << line << '\n';
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string f;
        std::size_t col = 0;
        bool first = true;
        while (std::getline(ss, f, ',')) {
            const bool mask = col < header.size() &&
                              std::find(columns.begin(), columns.end(), header[col]) != columns.end();
            out << (first ? "" : ",") << (mask ? "" : f);
            first = false;
            ++col;
        }
        out << '\n';
    }
    return out.str();
}

void write_manifest(const RunConfig& cfg, const std::vector<fs::path>& files) {
    json manifest;
    manifest["seed"] = cfg.seed;
    manifest["files"] = json::array();
    std::vector<fs::path> sorted = files;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& f : sorted) {
        const std::string contents = rek::read_file(f);
        json entry;
        entry["path"] = fs::relative(f, cfg.out).generic_string();
        if (f.filename() == "train_log.csv") {
            entry["masked_columns"] = {"seconds"};
            entry["sha256"] = hash_file_sha256(masked_csv(contents, {"seconds"}));
        } else {
            entry["sha256"] = hash_file_sha256(contents);
            entry["bytes"] = contents.size();
        }
        manifest["files"].push_back(entry);
    }
    const fs::path path = fs::path(cfg.out) / "manifest.json";
    rek::atomic_write(path, manifest.dump(2) + "\n");
    std::cout << "run: manifest lists " << sorted.size() << " files\n";
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const rek::ValidationError*>(&e) || dynamic_cast<const rek::ParseError*>(&e)) return 1;
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Radio environment knowledge toolkit"};
    app.require_subcommand(1);

    std::string scene_path;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> trajectory;
    std::vector<std::string> coeff_overrides;
    bool canonical = false;

    app.add_option("--scene", scene_path, "Scene JSON file");
    app.add_option("--config", config_path, "Run configuration JSON");
    app.add_option("--seed", seed, "Global seed");
    app.add_option("--out", out, "Output directory");
    app.add_option("--trajectory", trajectory, "all | column | c1,c2,... | rx:i,j,...");
    app.add_option("--coeff", coeff_overrides, "Knowledge coefficient override key=value")->take_all();
    app.add_flag("--canonical", canonical, "Use the bundled street-canyon scene");

    auto* scene_cmd = app.add_subcommand("scene", "Generate or validate a scene");
    bool generate = false;
    scene_cmd->add_flag("--generate", generate, "Draw a line Boolean model scene");

    auto* rek_cmd = app.add_subcommand("rek", "Knowledge spectra per trajectory");
    auto* oracle_cmd = app.add_subcommand("oracle", "Ray-tracing-lite path loss labels");

    auto* train_cmd = app.add_subcommand("train", "Train the CNN predictor");
    std::string spectra_dir;
    std::string labels_path;
    std::optional<int> epochs;
    train_cmd->add_option("--spectra", spectra_dir, "Directory of traj_*.csv spectra")->required();
    train_cmd->add_option("--labels", labels_path, "Oracle labels.csv")->required();
    train_cmd->add_option("--epochs", epochs, "Epoch budget");

    auto* predict_cmd = app.add_subcommand("predict", "Predict path loss per trajectory");
    std::string model_path;
    std::string split_path;
    predict_cmd->add_option("--model", model_path, "Checkpoint")->required();
    predict_cmd->add_option("--spectra", spectra_dir, "Directory of traj_*.csv spectra")->required();
    predict_cmd->add_option("--split", split_path, "split.csv from training; predict only its test trajectories");

    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against labels");
    std::string pred_dir;
    eval_cmd->add_option("--predictions", pred_dir, "Directory of prediction CSVs")->required();
    eval_cmd->add_option("--labels", labels_path, "Oracle labels.csv")->required();

    auto* run_cmd = app.add_subcommand("run", "Full pipeline");
    bool all = false;
    run_cmd->add_flag("--all", all, "Run every stage and write a manifest");
    run_cmd->add_option("--epochs", epochs, "Epoch budget");

    for (auto* sub : {scene_cmd, rek_cmd, oracle_cmd, train_cmd, predict_cmd, eval_cmd, run_cmd}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) apply_config_file(cfg, config_path);
        if (!scene_path.empty()) cfg.scene_path = scene_path;
        if (canonical) cfg.canonical = true;
        if (seed) cfg.seed = *seed;
        if (out) cfg.out = *out;
        if (trajectory) cfg.trajectory = *trajectory;
        if (epochs) cfg.train.epochs = *epochs;
        propagate_seed(cfg);
        for (const auto& kv : coeff_overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw rek::ValidationError("--coeff expects key=value, got '" + kv + "'");
            try {
                cfg.coeffs.set(kv.substr(0, eq), std::stod(kv.substr(eq + 1)));
            } catch (const std::invalid_argument&) {
                throw rek::ValidationError("--coeff value is not a number: '" + kv + "'");
            }
        }
        cfg.coeffs.validate();

        if (scene_cmd->parsed()) {
            if (generate && !cfg.generate) {
                cfg.generate = rek::BooleanModelParams{};
                cfg.generate->seed = cfg.seed;
            }
            if (generate) {
                cfg.scene_path.reset();
                cfg.canonical = false;
            }
            stage_scene(cfg, resolve_scene(cfg));
        } else if (rek_cmd->parsed()) {
            stage_rek(cfg, resolve_scene(cfg));
        } else if (oracle_cmd->parsed()) {
            stage_oracle(cfg, resolve_scene(cfg));
        } else if (train_cmd->parsed()) {
            stage_train(cfg, spectra_dir, labels_path);
        } else if (predict_cmd->parsed()) {
            std::optional<fs::path> split;
            if (!split_path.empty()) split = split_path;
            stage_predict(cfg, model_path, spectra_dir, split);
        } else if (eval_cmd->parsed()) {
            std::optional<rek::Scene> scene;
            if (cfg.scene_path || cfg.canonical || cfg.generate) scene = resolve_scene(cfg);
            stage_eval(cfg, pred_dir, labels_path, scene ? &*scene : nullptr);
        } else if (run_cmd->parsed()) {
            if (!all) throw rek::ValidationError("run currently supports only --all");
            if (!cfg.scene_path && !cfg.generate) cfg.canonical = true;
            const auto scene = resolve_scene(cfg);
            std::vector<fs::path> files;
            auto append = [&](const std::vector<fs::path>& more) { files.insert(files.end(), more.begin(), more.end()); };
            append(stage_scene(cfg, scene));
            append(stage_rek(cfg, scene));
            append(stage_oracle(cfg, scene));
            const fs::path root(cfg.out);
            append(stage_train(cfg, root / "rek", root / "oracle" / "labels.csv"));
            append(stage_predict(cfg, root / "model" / "model.json", root / "rek", root / "model" / "split.csv"));
            append(stage_eval(cfg, root / "predictions", root / "oracle" / "labels.csv", &scene));
            write_manifest(cfg, files);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}
