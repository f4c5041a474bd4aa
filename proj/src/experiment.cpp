// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>

#include "guidelab/checkpoint.hpp"
#include "guidelab/csv.hpp"
#include "guidelab/errors.hpp"
#include "guidelab/metrics.hpp"
#include "guidelab/random.hpp"

namespace guidelab {

namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write " + path.string());
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    auto out = open_output(path);
    out << text;
}

void write_record_files(const fs::path& dir, const RunRecord& rec, bool main_arm, bool timing) {
    write_json_file(dir / record_file_name(rec.seed, rec.arm, main_arm), rec.to_json(timing));
    auto csv = open_output(dir / accuracy_file_name(rec.seed, rec.arm, main_arm));
    rec.write_accuracy_csv(csv);
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(precision) << v;
    return o.str();
}

std::string fmt_ms(const MeanStd& m) {
    if (m.count == 0) return "-";
    return fmt(m.mean) + " +- " + fmt(m.std);
}

RunRecord record_from_json(const nlohmann::json& doc) {
    if (doc.value("format", "") != "guidelab-run/1") throw FileError("record: unknown format");
    RunRecord rec;
    rec.seed = doc.at("seed").get<std::uint64_t>();
    rec.arm = doc.at("arm").get<std::string>();
    rec.status = doc.at("status").get<std::string>();
    rec.task_classes = doc.at("task_classes").get<std::vector<std::vector<int>>>();
    rec.accuracy = AccuracyMatrix::from_json(doc.at("accuracy"));
    for (const auto& t : doc.at("tasks")) {
        TaskLog log;
        log.task = t.at("task").get<std::size_t>();
        log.classifier_seconds = t.value("classifier_seconds", 0.0);
        log.diffusion_seconds = t.value("diffusion_seconds", 0.0);
        log.rehearsal_seconds = t.value("rehearsal_seconds", 0.0);
        rec.tasks.push_back(log);
    }
    rec.config = doc.at("config");
    return rec;
}

void write_samples_csv(std::ostream& out, const Tensor& x, std::span<const int> labels, std::uint64_t seed,
                       bool header) {
    if (header) {
        for (std::size_t k = 0; k < x.cols(); ++k) out << "x_" << k << ',';
        out << "label,seed\n";
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t k = 0; k < x.cols(); ++k) out << format_number(x.at(r, k)) << ',';
        out << labels[r] << ',' << seed << '\n';
    }
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

template <class Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what();
        if (!e.key().empty()) std::cerr << " [key: " << e.key() << "]";
        std::cerr << "\n";
        return 2;
    } catch (const FileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

ExperimentConfig load_with_overrides(const fs::path& path, const std::vector<std::string>& overrides) {
    ExperimentConfig config = load_config(path);
    for (const auto& o : overrides) apply_override(config, o);
    return config;
}

}  // namespace

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd m;
    m.count = values.size();
    if (values.empty()) return m;
    for (double v : values) m.mean += v;
    m.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - m.mean) * (v - m.mean);
        m.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return m;
}

std::optional<double> previous_task_accuracy(const RunRecord& record) {
    const std::size_t done = record.accuracy.tasks_completed();
    if (done < 2) return std::nullopt;
    double total = 0.0;
    for (std::size_t j = 1; j < done; ++j) total += record.accuracy.at(j, done);
    return total / static_cast<double>(done - 1);
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records, const std::string& label) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const RunRecord*>> groups;
    for (const auto& r : records) {
        if (!groups.contains(r.arm)) order.push_back(r.arm);
        groups[r.arm].push_back(&r);
    }
    std::vector<SummaryRow> rows;
    for (const auto& arm : order) {
        std::vector<double> acc, fgt, prev, secs, csecs;
        for (const RunRecord* r : groups[arm]) {
            if (auto v = r->final_accuracy()) acc.push_back(*v);
            if (auto v = r->final_forgetting()) fgt.push_back(*v);
            if (auto v = previous_task_accuracy(*r)) prev.push_back(*v);
            secs.push_back(r->total_seconds());
            double c = 0.0;
            for (const auto& t : r->tasks) c += t.classifier_seconds;
            csecs.push_back(c);
        }
        rows.push_back({label, arm, mean_std(acc), mean_std(fgt), mean_std(prev), mean_std(secs), mean_std(csecs)});
    }
    return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows, bool include_timing) {
    const bool labeled = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return !r.label.empty(); });
    auto cell = [](const MeanStd& m, double v) { return m.count == 0 ? std::string() : format_number(v); };
    if (labeled) out << "value,";
    out << "arm,seeds,avg_accuracy_mean,avg_accuracy_std,avg_forgetting_mean,avg_forgetting_std,"
           "previous_accuracy_mean,previous_accuracy_std";
    if (include_timing) out << ",seconds_mean,seconds_std,classifier_seconds_mean";
    out << '\n';
    for (const auto& r : rows) {
        if (labeled) out << r.label << ',';
        out << r.arm << ',' << r.avg_accuracy.count << ',' << cell(r.avg_accuracy, r.avg_accuracy.mean) << ','
            << cell(r.avg_accuracy, r.avg_accuracy.std) << ',' << cell(r.avg_forgetting, r.avg_forgetting.mean) << ','
            << cell(r.avg_forgetting, r.avg_forgetting.std) << ','
            << cell(r.previous_accuracy, r.previous_accuracy.mean) << ','
            << cell(r.previous_accuracy, r.previous_accuracy.std);
        if (include_timing) {
            out << ',' << format_number(r.seconds.mean) << ',' << format_number(r.seconds.std) << ','
                << format_number(r.classifier_seconds.mean);
        }
        out << '\n';
    }
}

void print_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << std::left;
    for (const auto& r : rows) {
        if (!r.label.empty()) out << std::setw(10) << r.label << ' ';
        out << std::setw(11) << r.arm << " A_T " << fmt_ms(r.avg_accuracy) << "   F_T " << fmt_ms(r.avg_forgetting)
            << "   prev " << fmt_ms(r.previous_accuracy) << "   (" << r.avg_accuracy.count << " seeds, "
            << fmt(r.seconds.mean, 1) << " s)\n";
    }
}

std::string record_file_name(std::uint64_t seed, const std::string& arm, bool main_arm) {
    return "record_" + std::to_string(seed) + (main_arm ? "" : "_" + arm) + ".json";
}

std::string accuracy_file_name(std::uint64_t seed, const std::string& arm, bool main_arm) {
    return "accuracy_matrix_" + std::to_string(seed) + (main_arm ? "" : "_" + arm) + ".csv";
}

fs::path checkpoint_dir(const fs::path& output_dir, std::uint64_t seed) {
    return output_dir / ("checkpoints_" + std::to_string(seed));
}

// ---------------------------------------------------------------------------

std::vector<RunRecord> run_experiment(const ExperimentConfig& config, std::ostream* log) {
    config.validate();
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    write_text(dir / "config.ini", config.to_text());
    const auto arms = config.arms();
    std::vector<RunRecord> all;
    for (std::uint64_t seed : config.seeds) {
        const Scenario scenario = config.make_scenario(seed);
        RunOptions options;
        options.archive_samples = config.archive_samples;
        if (config.save_checkpoints) {
            options.checkpoint_dir = checkpoint_dir(dir, seed);
            fs::create_directories(*options.checkpoint_dir);
        }
        options.on_progress = [&](const std::vector<RunRecord>& partial) {
            for (std::size_t a = 0; a < partial.size(); ++a) {
                write_record_files(dir, partial[a], a == 0, config.record_timing);
            }
        };
        auto records = run_scenario_arms(scenario, config.training_for(seed), arms, options);
        for (std::size_t a = 0; a < records.size(); ++a) {
            write_record_files(dir, records[a], a == 0, config.record_timing);
            if (log) {
                *log << "seed " << seed << "  " << std::setw(11) << std::left << records[a].arm;
                if (auto v = records[a].final_accuracy()) *log << "  A_T " << fmt(*v);
                if (auto v = records[a].final_forgetting()) *log << "  F_T " << fmt(*v);
                *log << '\n';
            }
            all.push_back(std::move(records[a]));
        }
    }
    const auto rows = summarize(all);
    auto out = open_output(dir / "summary.csv");
    write_summary_csv(out, rows, config.record_timing);
    if (log) print_summary(*log, rows);
    return all;
}

SweepAxis parse_sweep_axis(const std::string& name) {
    const std::string n = lowercase(name);
    if (n == "scale") return SweepAxis::Scale;
    if (n == "ddim_steps") return SweepAxis::DdimSteps;
    if (n == "interval") return SweepAxis::Interval;
    throw ConfigError("sweep: axis must be one of scale, ddim_steps, interval (got '" + name + "')", "axis");
}

std::string sweep_axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Scale:
            return "scale";
        case SweepAxis::DdimSteps:
            return "ddim_steps";
        case SweepAxis::Interval:
            return "interval";
    }
    return "scale";
}

std::vector<SummaryRow> run_sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<double>& values,
                                  std::ostream* log) {
    config.validate();
    if (values.empty()) throw ConfigError("sweep: no values given", "values");
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    std::vector<SummaryRow> rows;

    if (axis == SweepAxis::Scale) {
        GuidanceVariant variant = config.training.guidance.variant;
        if (variant == GuidanceVariant::None) variant = GuidanceVariant::Guide;
        std::vector<ClassifierArm> arms;
        for (double v : values) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("sweep: scale values must be nonnegative", "values");
            arms.push_back({"s=" + format_number(v), GuidanceConfig{variant, v, config.training.guidance.backprop_denoiser},
                            true});
        }
        std::vector<RunRecord> all;
        for (std::uint64_t seed : config.seeds) {
            auto recs = run_scenario_arms(config.make_scenario(seed), config.training_for(seed), arms);
            for (auto& r : recs) all.push_back(std::move(r));
            if (log) *log << "seed " << seed << " done\n";
        }
        for (std::size_t k = 0; k < values.size(); ++k) {
            std::vector<RunRecord> subset;
            for (const auto& r : all) {
                if (r.arm == arms[k].name) subset.push_back(r);
            }
            auto row = summarize(subset, format_number(values[k]));
            rows.push_back(row.front());
        }
    } else {
        for (double v : values) {
            if (!(v >= 1.0) || v != std::floor(v)) {
                throw ConfigError("sweep: " + sweep_axis_name(axis) + " values must be positive integers", "values");
            }
            ExperimentConfig c = config;
            if (axis == SweepAxis::DdimSteps) {
                c.training.sampler.ddim_steps = static_cast<int>(v);
            } else {
                c.training.generation_interval = static_cast<std::size_t>(v);
            }
            c.validate();
            std::vector<RunRecord> all;
            for (std::uint64_t seed : c.seeds) {
                const ClassifierArm arm = c.arms().front();
                auto recs = run_scenario_arms(c.make_scenario(seed), c.training_for(seed),
                                              std::span<const ClassifierArm>(&arm, 1));
                all.push_back(std::move(recs.front()));
            }
            rows.push_back(summarize(all, format_number(v)).front());
            if (log) *log << sweep_axis_name(axis) << " = " << format_number(v) << " done\n";
        }
    }
    auto out = open_output(dir / ("sweep_" + sweep_axis_name(axis) + ".csv"));
    write_summary_csv(out, rows, true);
    if (log) print_summary(*log, rows);
    return rows;
}

// ---------------------------------------------------------------------------

std::vector<ProbeRow> run_probe(const fs::path& run_dir, std::ostream* log) {
    const fs::path cfg_path = run_dir / "config.ini";
    if (!fs::exists(cfg_path)) throw FileError("probe: " + cfg_path.string() + " not found");
    const ExperimentConfig config = load_config(cfg_path);
    const std::string arm = config.arms().front().name;
    const std::size_t n_tasks = config.dataset.classes / config.classes_per_task;
    if (n_tasks < 2) throw ContractError("probe: needs a run with at least two tasks");

    std::vector<ProbeRow> rows;
    std::map<GuidanceVariant, std::ofstream> sample_files;
    for (auto v : config.probe.variants) {
        sample_files.emplace(v, open_output(run_dir / ("samples_" + std::string(variant_name(v)) + ".csv")));
    }
    std::vector<EmbeddingRow> embeddings;
    bool first_seed = true;

    for (std::uint64_t seed : config.seeds) {
        const fs::path ck = checkpoint_dir(run_dir, seed);
        const fs::path record_path = run_dir / record_file_name(seed, arm, true);
        if (!fs::exists(record_path)) throw FileError("probe: missing " + record_path.string());
        const fs::path cur_path = ck / classifier_checkpoint_name(arm, n_tasks);
        const fs::path prev_path = ck / classifier_checkpoint_name(arm, n_tasks - 1);
        const fs::path den_path = ck / denoiser_checkpoint_name(n_tasks - 1);
        for (const auto& p : {cur_path, prev_path, den_path}) {
            if (!fs::exists(p)) throw FileError("probe: missing checkpoint " + p.string());
        }
        const Classifier current = Classifier::from_json(read_json_file(cur_path));
        const Classifier previous = Classifier::from_json(read_json_file(prev_path));
        NoiseSchedule schedule;
        const Denoiser denoiser = Denoiser::from_json(read_json_file(den_path), &schedule);

        const Scenario scenario = config.make_scenario(seed);
        const auto prev_classes = scenario.classes_through(n_tasks - 1);
        const auto& cur_classes = scenario.tasks[n_tasks - 1].classes;
        std::vector<int> labels;
        for (int c : prev_classes) labels.insert(labels.end(), config.probe.samples_per_class, c);

        SamplerConfig sampler = config.training.sampler;
        sampler.seed = derive_seed(seed, Stream::Probe);
        const RehearsalModels models{denoiser, schedule, &previous, &current};
        const ProbeConfig probe{config.probe.epsilon};
        if (first_seed) {
            for (std::size_t j = 0; j < n_tasks; ++j) {
                const auto& test = scenario.tasks[j].test;
                auto e = export_embeddings(current, test.x(), test.labels, "real");
                embeddings.insert(embeddings.end(), e.begin(), e.end());
            }
        }
        for (auto v : config.probe.variants) {
            const GuidanceConfig g{v, config.training.guidance.scale, config.training.guidance.backprop_denoiser};
            const RehearsalBatch batch = sample_rehearsal(models, labels, cur_classes, g, sampler);
            ProbeRow row{seed, v, boundary_flip_rate(current, previous, batch.x, labels, probe, cur_classes)};
            rows.push_back(row);
            write_samples_csv(sample_files.at(v), batch.x, labels, seed, first_seed);
            if (first_seed) {
                auto e = export_embeddings(current, batch.x, labels, std::string(variant_name(v)));
                embeddings.insert(embeddings.end(), e.begin(), e.end());
            }
            if (log) {
                *log << "seed " << seed << "  " << std::setw(11) << std::left << variant_name(v) << "  flip "
                     << fmt(row.stats.flip_rate) << "  conf_prev " << fmt(row.stats.mean_conf_prev) << "  conf_curr "
                     << fmt(row.stats.mean_conf_curr) << '\n';
            }
        }
        first_seed = false;
    }

    {
        auto out = open_output(run_dir / "probe.csv");
        out << "seed,variant,flip_rate,mean_conf_prev,mean_conf_curr,count\n";
        for (const auto& r : rows) {
            out << r.seed << ',' << variant_name(r.variant) << ',' << format_number(r.stats.flip_rate) << ','
                << format_number(r.stats.mean_conf_prev) << ',' << format_number(r.stats.mean_conf_curr) << ','
                << r.stats.count << '\n';
        }
    }
    {
        auto out = open_output(run_dir / "probe_summary.csv");
        out << "variant,seeds,flip_rate_mean,flip_rate_std,conf_prev_mean,conf_prev_std,conf_curr_mean,conf_curr_std\n";
        for (auto v : config.probe.variants) {
            std::vector<double> flip, cp, cc;
            for (const auto& r : rows) {
                if (r.variant != v) continue;
                flip.push_back(r.stats.flip_rate);
                cp.push_back(r.stats.mean_conf_prev);
                cc.push_back(r.stats.mean_conf_curr);
            }
            const auto f = mean_std(flip), p = mean_std(cp), c = mean_std(cc);
            out << variant_name(v) << ',' << f.count << ',' << format_number(f.mean) << ',' << format_number(f.std)
                << ',' << format_number(p.mean) << ',' << format_number(p.std) << ',' << format_number(c.mean) << ','
                << format_number(c.std) << '\n';
        }
    }
    auto emb = open_output(run_dir / "embeddings.csv");
    write_embeddings_csv(emb, embeddings);
    return rows;
}

// ---------------------------------------------------------------------------

std::vector<DualDemoResult> run_demo_dual(const ExperimentConfig& config, std::ostream* log) {
    config.validate();
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    const std::uint64_t seed = config.seeds.front();
    DatasetSpec spec = config.dataset;
    spec.seed = config.dataset_seed.value_or(seed);
    const Dataset data = generate(spec).data;
    const TrainingConfig tc = config.training_for(seed);
    const NoiseSchedule schedule = tc.schedule();

    Classifier classifier({data.dim, spec.classes, tc.classifier_hidden}, derive_seed(seed, Stream::Demo, {0}));
    {
        Optimizer opt(tc.classifier_optimizer, classifier.parameters());
        Rng rng(derive_seed(seed, Stream::Demo, {1}));
        std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
        std::vector<std::size_t> idx(tc.batch_size);
        for (std::size_t s = 0; s < config.dual.classifier_steps; ++s) {
            for (auto& i : idx) i = pick(rng);
            const Dataset b = data.subset(idx);
            classifier_train_step(classifier, opt, b.x(), b.labels);
        }
    }

    Denoiser denoiser({data.dim, spec.classes, tc.denoiser_hidden, tc.time_dim, tc.class_dim},
                      derive_seed(seed, Stream::Demo, {2}));
    {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.labels[i] == config.dual.c1) rows.push_back(i);
        }
        Dataset only_c1 = data.subset(rows);
        std::fill(only_c1.labels.begin(), only_c1.labels.end(), denoiser.unconditional_label());
        Optimizer opt(tc.diffusion_optimizer, denoiser.parameters());
        Rng rng(derive_seed(seed, Stream::Demo, {3}));
        std::uniform_int_distribution<std::size_t> pick(0, only_c1.size() - 1);
        std::vector<std::size_t> idx(tc.diffusion_batch_size);
        for (std::size_t s = 0; s < config.dual.diffusion_steps; ++s) {
            for (auto& i : idx) i = pick(rng);
            const Dataset b = only_c1.subset(idx);
            diffusion_train_step(denoiser, opt, b.x(), b.labels, schedule, rng);
        }
    }

    SamplerConfig sampler = tc.sampler;
    sampler.seed = derive_seed(seed, Stream::Demo, {4});
    std::vector<DualDemoResult> results;
    for (const auto& [preset, s2] : {std::pair<std::string, double>{"dual", config.dual.s2}, {"reference", 0.0}}) {
        const DualGuidanceConfig dg{config.dual.c1, config.dual.c2, config.dual.s1, s2};
        DualDemoResult r;
        r.preset = preset;
        r.s1 = dg.s1;
        r.s2 = dg.s2;
        r.samples = dual_guided_sample(denoiser, schedule, classifier, dg, config.dual.count, sampler);
        {
            GradModeGuard no_grad(GradMode::Disabled);
            r.logits = classifier.logits(r.samples);
        }
        const auto pred = predict(classifier, r.samples);
        for (int p : pred) {
            r.fraction_c1 += p == dg.c1 ? 1.0 : 0.0;
            r.fraction_c2 += p == dg.c2 ? 1.0 : 0.0;
        }
        r.fraction_c1 /= static_cast<double>(pred.size());
        r.fraction_c2 /= static_cast<double>(pred.size());
        for (std::size_t i = 0; i < r.logits.rows(); ++i) r.mean_logit_c2 += r.logits.at(i, dg.c2);
        r.mean_logit_c2 /= static_cast<double>(r.logits.rows());

        auto out = open_output(dir / ("samples_" + preset + ".csv"));
        for (std::size_t k = 0; k < r.samples.cols(); ++k) out << "x_" << k << ',';
        for (std::size_t k = 0; k < r.logits.cols(); ++k) out << "logit_" << k << ',';
        out << "predicted\n";
        for (std::size_t i = 0; i < pred.size(); ++i) {
            for (std::size_t k = 0; k < r.samples.cols(); ++k) out << format_number(r.samples.at(i, k)) << ',';
            for (std::size_t k = 0; k < r.logits.cols(); ++k) out << format_number(r.logits.at(i, k)) << ',';
            out << pred[i] << '\n';
        }
        if (log) {
            *log << std::setw(10) << std::left << preset << " s1 " << format_number(r.s1) << " s2 "
                 << format_number(r.s2) << "  predicted c1 " << fmt(r.fraction_c1) << "  predicted c2 "
                 << fmt(r.fraction_c2) << "  mean c2 logit " << fmt(r.mean_logit_c2) << '\n';
        }
        results.push_back(std::move(r));
    }
    return results;
}

RecallComparison compare_recall(const ExperimentConfig& config, std::uint64_t seed, std::size_t k) {
    config.validate();
    const Scenario scenario = config.make_scenario(seed);
    const TrainingConfig tc = config.training_for(seed);
    const NoiseSchedule schedule = tc.schedule();
    const Denoiser continual = train_diffusion_chain(scenario, tc, scenario.num_tasks());
    const Denoiser joint = train_joint_diffusion(scenario, tc);

    const Dataset& real = scenario.tasks.front().train;
    SamplerConfig sampler = tc.sampler;
    sampler.seed = derive_seed(seed, Stream::Recall);
    const Tensor real_x = real.x();
    RecallComparison out;
    out.seed = seed;
    out.continual = knn_precision_recall(real_x, sample(continual, real.labels, sampler, schedule), k);
    out.joint = knn_precision_recall(real_x, sample(joint, real.labels, sampler, schedule), k);
    return out;
}

std::vector<SummaryRow> build_report(const fs::path& run_dir, std::ostream* log) {
    if (!fs::is_directory(run_dir)) throw FileError("report: " + run_dir.string() + " is not a directory");
    const std::regex pattern(R"(record_(\d+)(_[A-Z_]+)?\.json)");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        if (std::regex_match(entry.path().filename().string(), pattern)) files.push_back(entry.path());
    }
    if (files.empty()) throw FileError("report: no record files in " + run_dir.string());
    std::sort(files.begin(), files.end());
    std::vector<RunRecord> records;
    bool timing = false;
    for (const auto& f : files) {
        const auto doc = read_json_file(f);
        timing = timing || (!doc.at("tasks").empty() && doc.at("tasks")[0].contains("classifier_seconds"));
        records.push_back(record_from_json(doc));
    }
    const fs::path cfg_path = run_dir / "config.ini";
    if (fs::exists(cfg_path)) {
        std::vector<std::string> order;
        for (const auto& arm : load_config(cfg_path).arms()) order.push_back(arm.name);
        auto rank = [&](const RunRecord& r) {
            return static_cast<std::size_t>(std::find(order.begin(), order.end(), r.arm) - order.begin());
        };
        std::stable_sort(records.begin(), records.end(),
                         [&](const RunRecord& a, const RunRecord& b) { return rank(a) < rank(b); });
    }
    const auto rows = summarize(records);
    auto out = open_output(run_dir / "summary.csv");
    write_summary_csv(out, rows, timing);
    if (log) print_summary(*log, rows);
    return rows;
}

// ---------------------------------------------------------------------------

int cmd_run(const fs::path& config_path, const std::vector<std::string>& overrides) {
    return guarded([&] {
        run_experiment(load_with_overrides(config_path, overrides), &std::cout);
        return 0;
    });
}

int cmd_sweep(const fs::path& config_path, const std::string& axis, const std::vector<double>& values,
              const std::vector<std::string>& overrides) {
    return guarded([&] {
        const SweepAxis a = parse_sweep_axis(axis);
        if (values.empty()) throw ConfigError("sweep: --values must list at least one value", "values");
        run_sweep(load_with_overrides(config_path, overrides), a, values, &std::cout);
        return 0;
    });
}

int cmd_probe(const fs::path& run_dir) {
    return guarded([&] {
        run_probe(run_dir, &std::cout);
        return 0;
    });
}

int cmd_demo_dual(const fs::path& config_path, const std::vector<std::string>& overrides) {
    return guarded([&] {
        run_demo_dual(load_with_overrides(config_path, overrides), &std::cout);
        return 0;
    });
}

int cmd_report(const fs::path& run_dir) {
    return guarded([&] {
        build_report(run_dir, &std::cout);
        return 0;
    });
}

}  // namespace guidelab
