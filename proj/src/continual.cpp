// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/continual.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "guidelab/checkpoint.hpp"
#include "guidelab/errors.hpp"
#include "guidelab/random.hpp"

namespace guidelab {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Accumulates a loss trace as one mean per window.
class LossWindow {
  public:
    LossWindow(std::vector<double>& out, std::size_t width) : out_(out), width_(std::max<std::size_t>(width, 1)) {}
    void add(double v) {
        sum_ += v;
        if (++count_ == width_) flush();
    }
    void flush() {
        if (count_ == 0) return;
        out_.push_back(sum_ / static_cast<double>(count_));
        sum_ = 0.0;
        count_ = 0;
    }

  private:
    std::vector<double>& out_;
    std::size_t width_;
    double sum_ = 0.0;
    std::size_t count_ = 0;
};

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::SGD ? "sgd" : "adamw"; }

nlohmann::json optimizer_json(const OptimizerConfig& c) {
    return {{"kind", optimizer_name(c.kind)}, {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
            {"beta2", c.beta2},               {"epsilon", c.epsilon},             {"weight_decay", c.weight_decay},
            {"momentum", c.momentum}};
}

void check_optimizer(const OptimizerConfig& c, const std::string& prefix) {
    if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
        throw ConfigError(prefix + ": learning rate must be positive", prefix + "_lr");
    }
    if (c.weight_decay < 0.0) throw ConfigError(prefix + ": weight decay must be nonnegative", prefix + "_weight_decay");
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void TrainingConfig::validate() const {
    if (classifier_steps == 0) throw ConfigError("classifier_steps must be positive", "classifier_steps");
    if (diffusion_steps == 0) throw ConfigError("diffusion_steps must be positive", "diffusion_steps");
    if (generation_interval == 0) throw ConfigError("generation_interval must be positive", "generation_interval");
    if (generation_interval != kRegenerateOnce && generation_interval > classifier_steps) {
        throw ConfigError("generation_interval may not exceed classifier_steps", "generation_interval");
    }
    if (batch_size == 0) throw ConfigError("batch_size must be positive", "batch_size");
    if (diffusion_batch_size == 0) throw ConfigError("diffusion_batch_size must be positive", "diffusion_batch_size");
    if (classifier_hidden.empty()) throw ConfigError("classifier_hidden needs at least one layer", "classifier_hidden");
    if (denoiser_hidden.empty()) throw ConfigError("denoiser_hidden needs at least one layer", "denoiser_hidden");
    if (time_dim == 0 || time_dim % 2 != 0) throw ConfigError("time_dim must be even and positive", "time_dim");
    if (class_dim == 0) throw ConfigError("class_dim must be positive", "class_dim");
    if (guidance.scale < 0.0 || !std::isfinite(guidance.scale)) {
        throw ConfigError("guidance scale must be finite and nonnegative", "scale");
    }
    if (loss_log_interval == 0) throw ConfigError("loss_log_interval must be positive", "loss_log_interval");
    check_optimizer(classifier_optimizer, "classifier");
    check_optimizer(diffusion_optimizer, "diffusion");
    const NoiseSchedule s = schedule();
    if (sampler.ddim_steps < 1 || sampler.ddim_steps > s.num_steps()) {
        throw ConfigError("ddim_steps must lie in [1, timesteps]", "ddim_steps");
    }
}

NoiseSchedule TrainingConfig::schedule() const {
    return make_linear_schedule(diffusion_timesteps, beta_start, beta_end);
}

nlohmann::json TrainingConfig::to_json() const {
    nlohmann::json interval =
        generation_interval == kRegenerateOnce ? nlohmann::json("inf") : nlohmann::json(generation_interval);
    return {{"classifier_steps", classifier_steps},
            {"diffusion_steps", diffusion_steps},
            {"generation_interval", interval},
            {"batch_size", batch_size},
            {"diffusion_batch_size", diffusion_batch_size},
            {"classifier_optimizer", optimizer_json(classifier_optimizer)},
            {"diffusion_optimizer", optimizer_json(diffusion_optimizer)},
            {"classifier_hidden", classifier_hidden},
            {"denoiser_hidden", denoiser_hidden},
            {"time_dim", time_dim},
            {"class_dim", class_dim},
            {"diffusion_timesteps", diffusion_timesteps},
            {"beta_start", beta_start},
            {"beta_end", beta_end},
            {"replay", replay},
            {"train_final_diffusion", train_final_diffusion},
            {"guidance",
             {{"variant", variant_name(guidance.variant)},
              {"scale", guidance.scale},
              {"backprop_denoiser", guidance.backprop_denoiser}}},
            {"ddim_steps", sampler.ddim_steps},
            {"seed", seed}};
}

// ---------------------------------------------------------------------------
// Records

std::optional<double> RunRecord::final_accuracy() const {
    const std::size_t done = accuracy.tasks_completed();
    if (done == 0) return std::nullopt;
    return avg_accuracy(accuracy, done);
}

std::optional<double> RunRecord::final_forgetting() const {
    const std::size_t done = accuracy.tasks_completed();
    if (done < 2) return std::nullopt;
    return avg_forgetting(accuracy, done);
}

double RunRecord::total_seconds() const {
    double s = 0.0;
    for (const auto& t : tasks) s += t.classifier_seconds + t.diffusion_seconds;
    return s;
}

nlohmann::json RunRecord::to_json(bool include_timing) const {
    nlohmann::json j;
    j["format"] = "guidelab-run/1";
    j["seed"] = seed;
    j["arm"] = arm;
    j["status"] = status;
    j["task_classes"] = task_classes;
    j["accuracy"] = accuracy.to_json();
    const std::size_t done = accuracy.tasks_completed();
    nlohmann::json avg_acc = nlohmann::json::array(), avg_fgt = nlohmann::json::array();
    for (std::size_t i = 1; i <= done; ++i) {
        avg_acc.push_back(avg_accuracy(accuracy, i));
        avg_fgt.push_back(i >= 2 ? nlohmann::json(avg_forgetting(accuracy, i)) : nlohmann::json());
    }
    j["avg_accuracy"] = avg_acc;
    j["avg_forgetting"] = avg_fgt;
    const auto fa = final_accuracy();
    const auto ff = final_forgetting();
    j["final_avg_accuracy"] = fa ? nlohmann::json(*fa) : nlohmann::json();
    j["final_avg_forgetting"] = ff ? nlohmann::json(*ff) : nlohmann::json();
    nlohmann::json logs = nlohmann::json::array();
    for (const auto& t : tasks) {
        nlohmann::json l{{"task", t.task},
                         {"classifier_loss", t.classifier_loss},
                         {"diffusion_loss", t.diffusion_loss},
                         {"rehearsal_generations", t.rehearsal_generations},
                         {"diffusion_dataset_size", t.diffusion_dataset_size}};
        if (include_timing) {
            l["classifier_seconds"] = t.classifier_seconds;
            l["rehearsal_seconds"] = t.rehearsal_seconds;
            l["diffusion_seconds"] = t.diffusion_seconds;
        }
        logs.push_back(std::move(l));
    }
    j["tasks"] = std::move(logs);
    if (!archived_rehearsal.empty()) {
        nlohmann::json arch = nlohmann::json::array();
        for (const auto& b : archived_rehearsal) {
            const auto v = b.x.values();
            arch.push_back({{"dim", b.x.cols()}, {"values", std::vector<double>(v.begin(), v.end())},
                            {"labels", b.labels}});
        }
        j["archived_rehearsal"] = std::move(arch);
    }
    j["config"] = config;
    return j;
}

void RunRecord::write_accuracy_csv(std::ostream& out) const { accuracy.write_csv(out); }

// ---------------------------------------------------------------------------
// Protocol pieces

BatchPlan plan_balanced_batch(std::size_t batch_size, std::span<const int> previous_classes,
                              std::span<const int> current_classes) {
    if (current_classes.empty()) throw ContractError("plan_balanced_batch: task has no classes");
    const std::size_t n_seen = previous_classes.size() + current_classes.size();
    if (batch_size < n_seen) {
        throw ConfigError("batch_size " + std::to_string(batch_size) + " is smaller than the " +
                              std::to_string(n_seen) + " classes seen so far",
                          "batch_size");
    }
    BatchPlan plan;
    const std::size_t q = batch_size / n_seen;
    plan.per_previous_class = previous_classes.empty() ? 0 : q;
    std::vector<int> current(current_classes.begin(), current_classes.end());
    std::sort(current.begin(), current.end());
    std::size_t remainder = batch_size - q * n_seen;
    for (int c : current) plan.real.emplace_back(c, q);
    for (std::size_t k = 0; remainder > 0; k = (k + 1) % current.size(), --remainder) ++plan.real[k].second;
    return plan;
}

std::vector<std::vector<std::size_t>> index_by_class(const Dataset& data, std::size_t num_classes) {
    std::vector<std::vector<std::size_t>> out(num_classes);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int y = data.labels[i];
        if (y >= 0 && static_cast<std::size_t>(y) < num_classes) out[static_cast<std::size_t>(y)].push_back(i);
    }
    return out;
}

Batch build_balanced_batch(const Dataset& real, const std::vector<std::vector<std::size_t>>& rows_by_class,
                           const RehearsalBatch* cache, const BatchPlan& plan,
                           std::span<const int> previous_classes, Rng& rng) {
    if (!previous_classes.empty() && (cache == nullptr || cache->labels.empty())) {
        throw ProtocolError("build_balanced_batch: rehearsal cache is empty while previous classes exist");
    }
    Batch b;
    std::vector<double> values;
    for (const auto& [c, count] : plan.real) {
        const auto& rows = rows_by_class.at(static_cast<std::size_t>(c));
        if (rows.empty()) throw ProtocolError("build_balanced_batch: no training rows for class " + std::to_string(c));
        std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
        for (std::size_t k = 0; k < count; ++k) {
            const auto r = real.row(rows[pick(rng)]);
            values.insert(values.end(), r.begin(), r.end());
            b.labels.push_back(c);
        }
    }
    if (!previous_classes.empty()) {
        const auto v = cache->x.values();
        values.insert(values.end(), v.begin(), v.end());
        b.labels.insert(b.labels.end(), cache->labels.begin(), cache->labels.end());
    }
    b.x = Tensor::matrix(b.labels.size(), real.dim, std::move(values));
    return b;
}

RehearsalBatch refresh_rehearsal_cache(const RehearsalModels& models, const RehearsalRequest& request,
                                       const TrainingConfig& config, const GuidanceConfig& guidance) {
    if (request.previous_classes.empty()) throw ProtocolError("refresh_rehearsal_cache: no previous classes");
    if (request.per_class == 0) throw ProtocolError("refresh_rehearsal_cache: zero samples per class requested");
    std::vector<int> labels;
    labels.reserve(request.per_class * request.previous_classes.size());
    for (int c : request.previous_classes) labels.insert(labels.end(), request.per_class, c);
    SamplerConfig sampler = config.sampler;
    sampler.seed = derive_seed(config.seed, Stream::Rehearsal, {request.task, request.generation});
    return sample_rehearsal(models, labels, request.current_classes, guidance, sampler);
}

Dataset build_diffusion_dataset(const Denoiser* previous, const NoiseSchedule& schedule, const Scenario& scenario,
                                std::size_t task, const TrainingConfig& config) {
    if (task < 1 || task > scenario.num_tasks()) throw IndexError("build_diffusion_dataset: task out of range");
    Dataset out;
    out.dim = scenario.dim;
    if (task > 1) {
        if (previous == nullptr) throw ProtocolError("build_diffusion_dataset: previous diffusion model missing");
        std::size_t total = 0;
        for (std::size_t j = 0; j + 1 < task; ++j) total += scenario.tasks[j].train.size();
        const auto prev = scenario.classes_through(task - 1);
        std::vector<int> labels;
        labels.reserve(total);
        for (std::size_t k = 0; k < prev.size(); ++k) {
            const std::size_t count = total / prev.size() + (k < total % prev.size() ? 1 : 0);
            labels.insert(labels.end(), count, prev[k]);
        }
        constexpr std::size_t chunk = 1024;
        for (std::size_t start = 0, n = 0; start < labels.size(); start += chunk, ++n) {
            const std::size_t len = std::min(chunk, labels.size() - start);
            SamplerConfig sampler = config.sampler;
            sampler.seed = derive_seed(config.seed, Stream::DiffusionDataset, {task, n});
            const std::span<const int> part(labels.data() + start, len);
            out.append(sample(*previous, part, sampler, schedule), part);
        }
    }
    out.append(scenario.tasks[task - 1].train);
    return out;
}

void train_diffusion(Denoiser& model, const Dataset& data, const NoiseSchedule& schedule,
                     const TrainingConfig& config, std::size_t task, TaskLog& log) {
    if (data.empty()) throw ProtocolError("train_diffusion: empty dataset");
    Optimizer opt(config.diffusion_optimizer, model.parameters());
    Rng rng(derive_seed(config.seed, Stream::DiffusionTrain, {task}));
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    LossWindow window(log.diffusion_loss, config.loss_log_interval);
    std::vector<std::size_t> idx(config.diffusion_batch_size);
    for (std::size_t step = 0; step < config.diffusion_steps; ++step) {
        for (auto& i : idx) i = pick(rng);
        const Dataset batch = data.subset(idx);
        window.add(diffusion_train_step(model, opt, batch.x(), batch.labels, schedule, rng));
    }
    window.flush();
}

RehearsalBatch train_task_classifier(Classifier& classifier, const Scenario& scenario, std::size_t task,
                                     const PreviousModels& previous, const TrainingConfig& config,
                                     const ClassifierArm& arm, TaskLog& log) {
    if (task < 1 || task > scenario.num_tasks()) throw IndexError("train_task_classifier: task out of range");
    const auto start = Clock::now();
    const Task& current = scenario.tasks[task - 1];
    const bool replay = arm.replay && task > 1;
    const std::vector<int> prev = replay ? scenario.classes_through(task - 1) : std::vector<int>{};
    if (replay && (previous.diffusion == nullptr || previous.classifier == nullptr || previous.schedule == nullptr)) {
        throw ProtocolError("train_task_classifier: rehearsal needs the frozen previous models");
    }
    const BatchPlan plan = plan_balanced_batch(config.batch_size, prev, current.classes);
    const auto rows = index_by_class(current.train, scenario.num_classes);

    Optimizer opt(config.classifier_optimizer, classifier.parameters());
    Rng rng(derive_seed(config.seed, Stream::ClassifierBatch, {task}));
    LossWindow window(log.classifier_loss, config.loss_log_interval);
    RehearsalBatch cache;
    for (std::size_t n = 1; n <= config.classifier_steps; ++n) {
        if (replay && (n - 1) % config.generation_interval == 0) {
            const auto gen_start = Clock::now();
            const RehearsalModels models{*previous.diffusion, *previous.schedule, previous.classifier, &classifier};
            const RehearsalRequest request{prev, current.classes, plan.per_previous_class, task,
                                           log.rehearsal_generations};
            cache = refresh_rehearsal_cache(models, request, config, arm.guidance);
            ++log.rehearsal_generations;
            log.rehearsal_seconds += seconds_since(gen_start);
        }
        const Batch batch = build_balanced_batch(current.train, rows, replay ? &cache : nullptr, plan, prev, rng);
        window.add(classifier_train_step(classifier, opt, batch.x, batch.labels));
    }
    window.flush();
    log.classifier_seconds += seconds_since(start);
    return cache;
}

void evaluate_tasks(const Classifier& classifier, const Scenario& scenario, std::size_t task, AccuracyMatrix& m) {
    for (std::size_t j = 1; j <= task; ++j) {
        const Dataset& test = scenario.tasks[j - 1].test;
        if (test.empty()) throw ProtocolError("evaluate_tasks: task " + std::to_string(j) + " has no test split");
        m.set(j, task, accuracy(classifier, test.x(), test.labels));
    }
}

std::string classifier_checkpoint_name(const std::string& arm, std::size_t task) {
    return "classifier_" + arm + "_task" + std::to_string(task) + ".json";
}

std::string denoiser_checkpoint_name(std::size_t task) { return "denoiser_task" + std::to_string(task) + ".json"; }

std::vector<RunRecord> run_scenario_arms(const Scenario& scenario, const TrainingConfig& config,
                                         std::span<const ClassifierArm> arms, const RunOptions& options) {
    config.validate();
    scenario.validate();
    if (arms.empty()) throw ContractError("run_scenario: no classifier arms");
    if (scenario.num_tasks() == 0) throw ContractError("run_scenario: scenario has no tasks");
    const std::size_t n_tasks = scenario.num_tasks();
    const NoiseSchedule schedule = config.schedule();
    const bool need_diffusion = std::any_of(arms.begin(), arms.end(), [](const auto& a) { return a.replay; });

    const ClassifierConfig ccfg{scenario.dim, scenario.num_classes, config.classifier_hidden};
    const DenoiserConfig dcfg{scenario.dim, scenario.num_classes, config.denoiser_hidden, config.time_dim,
                              config.class_dim};

    std::vector<Classifier> classifiers;
    std::vector<std::optional<Classifier>> frozen_classifiers(arms.size());
    std::vector<RunRecord> records(arms.size());
    for (std::size_t a = 0; a < arms.size(); ++a) {
        classifiers.emplace_back(ccfg, derive_seed(config.seed, Stream::ModelInit, {0}));
        TrainingConfig arm_cfg = config;
        arm_cfg.guidance = arms[a].guidance;
        arm_cfg.replay = arms[a].replay;
        records[a].seed = config.seed;
        records[a].arm = arms[a].name;
        records[a].status = "running";
        records[a].accuracy = AccuracyMatrix(n_tasks);
        records[a].config = arm_cfg.to_json();
        for (const auto& t : scenario.tasks) records[a].task_classes.push_back(t.classes);
    }
    std::optional<Denoiser> denoiser, frozen_denoiser;
    if (need_diffusion) denoiser.emplace(dcfg, derive_seed(config.seed, Stream::ModelInit, {1}));

    auto report = [&] {
        if (options.on_progress) options.on_progress(records);
    };
    try {
        for (std::size_t task = 1; task <= n_tasks; ++task) {
            for (std::size_t a = 0; a < arms.size(); ++a) {
                TaskLog log;
                log.task = task;
                const PreviousModels previous{frozen_denoiser ? &*frozen_denoiser : nullptr,
                                              frozen_classifiers[a] ? &*frozen_classifiers[a] : nullptr, &schedule};
                RehearsalBatch cache =
                    train_task_classifier(classifiers[a], scenario, task, previous, config, arms[a], log);
                evaluate_tasks(classifiers[a], scenario, task, records[a].accuracy);
                if (options.archive_samples && !cache.labels.empty()) {
                    records[a].archived_rehearsal.push_back(std::move(cache));
                }
                if (options.checkpoint_dir) {
                    write_json_file(*options.checkpoint_dir / classifier_checkpoint_name(arms[a].name, task),
                                    classifiers[a].to_json());
                }
                records[a].tasks.push_back(std::move(log));
            }

            if (need_diffusion && (task < n_tasks || config.train_final_diffusion)) {
                TaskLog dlog;
                const auto start = Clock::now();
                const Dataset data = build_diffusion_dataset(frozen_denoiser ? &*frozen_denoiser : nullptr, schedule,
                                                             scenario, task, config);
                train_diffusion(*denoiser, data, schedule, config, task, dlog);
                dlog.diffusion_seconds = seconds_since(start);
                for (auto& rec : records) {
                    auto& log = rec.tasks.back();
                    log.diffusion_loss = dlog.diffusion_loss;
                    log.diffusion_dataset_size = data.size();
                    log.diffusion_seconds = dlog.diffusion_seconds;
                }
                if (options.checkpoint_dir) {
                    write_json_file(*options.checkpoint_dir / denoiser_checkpoint_name(task),
                                    denoiser->to_json(schedule));
                }
                frozen_denoiser.emplace(denoiser->clone());
            }
            for (std::size_t a = 0; a < arms.size(); ++a) frozen_classifiers[a].emplace(classifiers[a].clone());
            report();
        }
    } catch (const std::exception& e) {
        for (auto& rec : records) rec.status = std::string("failed: ") + e.what();
        report();
        throw;
    }
    for (auto& rec : records) rec.status = "complete";
    return records;
}

Denoiser train_diffusion_chain(const Scenario& scenario, const TrainingConfig& config, std::size_t tasks) {
    config.validate();
    scenario.validate();
    if (tasks < 1 || tasks > scenario.num_tasks()) {
        throw ContractError("train_diffusion_chain: task count " + std::to_string(tasks) + " out of range");
    }
    const NoiseSchedule schedule = config.schedule();
    Denoiser denoiser({scenario.dim, scenario.num_classes, config.denoiser_hidden, config.time_dim, config.class_dim},
                      derive_seed(config.seed, Stream::ModelInit, {1}));
    std::optional<Denoiser> frozen;
    for (std::size_t task = 1; task <= tasks; ++task) {
        TaskLog log;
        const Dataset data = build_diffusion_dataset(frozen ? &*frozen : nullptr, schedule, scenario, task, config);
        train_diffusion(denoiser, data, schedule, config, task, log);
        frozen.emplace(denoiser.clone());
    }
    return denoiser;
}

Denoiser train_joint_diffusion(const Scenario& scenario, const TrainingConfig& config) {
    config.validate();
    scenario.validate();
    Denoiser denoiser({scenario.dim, scenario.num_classes, config.denoiser_hidden, config.time_dim, config.class_dim},
                      derive_seed(config.seed, Stream::ModelInit, {1}));
    Dataset all;
    all.dim = scenario.dim;
    for (const auto& t : scenario.tasks) all.append(t.train);
    TrainingConfig joint = config;
    joint.diffusion_steps = config.diffusion_steps * scenario.num_tasks();
    TaskLog log;
    train_diffusion(denoiser, all, config.schedule(), joint, 1, log);
    return denoiser;
}

RunRecord run_scenario(const Scenario& scenario, const TrainingConfig& config, const RunOptions& options) {
    const ClassifierArm arm{config.replay ? std::string(variant_name(config.guidance.variant)) : "FINETUNE",
                            config.guidance, config.replay};
    auto records = run_scenario_arms(scenario, config, std::span<const ClassifierArm>(&arm, 1), options);
    return std::move(records.front());
}

}  // namespace guidelab
