// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "guidelab/csv.hpp"
#include "guidelab/errors.hpp"
#include "guidelab/random.hpp"

namespace guidelab {

namespace {

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    for (auto part : split_csv_line(value)) {
        auto t = trim(part);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

template <class T>
T parse_integer(const std::string& value, const std::string& key) {
    T out{};
    const std::string v = trim(value);
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + value + "'", key);
    }
    return out;
}

double parse_real(const std::string& value, const std::string& key) {
    try {
        const double v = parse_number(trim(value));
        if (!std::isfinite(v)) throw FileError("not finite");
        return v;
    } catch (const FileError&) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'", key);
    }
}

bool parse_flag(const std::string& value, const std::string& key) {
    std::string v = trim(value);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + value + "'", key);
}

std::vector<std::size_t> parse_sizes(const std::string& value, const std::string& key) {
    std::vector<std::size_t> out;
    for (const auto& p : split_list(value)) out.push_back(parse_integer<std::size_t>(p, key));
    if (out.empty()) throw ConfigError("config: '" + key + "' expects a nonempty list", key);
    return out;
}

template <class Fn>
auto rethrow_with_key(const std::string& key, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError("config: '" + key + "': " + e.what(), key);
    }
}

using Setter = std::function<void(ExperimentConfig&, const std::string& value, const std::string& key)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        // dataset
        t["dataset.generator"] = [](auto& c, const auto& v, const auto& k) {
            c.dataset.generator = rethrow_with_key(k, [&] { return parse_generator(trim(v)); });
        };
        t["dataset.dimension"] = [](auto& c, const auto& v, const auto& k) {
            c.dataset.dimension = parse_integer<std::size_t>(v, k);
        };
        t["dataset.classes"] = [](auto& c, const auto& v, const auto& k) {
            c.dataset.classes = parse_integer<std::size_t>(v, k);
        };
        t["dataset.samples_per_class"] = [](auto& c, const auto& v, const auto& k) {
            c.dataset.samples_per_class = parse_integer<std::size_t>(v, k);
        };
        t["dataset.noise_std"] = [](auto& c, const auto& v, const auto& k) { c.dataset.noise_std = parse_real(v, k); };
        t["dataset.seed"] = [](auto& c, const auto& v, const auto& k) {
            const std::string s = trim(v);
            if (s == "run") {
                c.dataset_seed.reset();
            } else {
                c.dataset_seed = parse_integer<std::uint64_t>(v, k);
            }
        };
        // scenario
        t["scenario.classes_per_task"] = [](auto& c, const auto& v, const auto& k) {
            c.classes_per_task = parse_integer<std::size_t>(v, k);
        };
        // training
        t["training.classifier_steps"] = [](auto& c, const auto& v, const auto& k) {
            c.training.classifier_steps = parse_integer<std::size_t>(v, k);
        };
        t["training.diffusion_steps"] = [](auto& c, const auto& v, const auto& k) {
            c.training.diffusion_steps = parse_integer<std::size_t>(v, k);
        };
        t["training.generation_interval"] = [](auto& c, const auto& v, const auto& k) {
            const std::string s = trim(v);
            c.training.generation_interval =
                (s == "inf" || s == "once") ? kRegenerateOnce : parse_integer<std::size_t>(v, k);
        };
        t["training.batch_size"] = [](auto& c, const auto& v, const auto& k) {
            c.training.batch_size = parse_integer<std::size_t>(v, k);
        };
        t["training.diffusion_batch_size"] = [](auto& c, const auto& v, const auto& k) {
            c.training.diffusion_batch_size = parse_integer<std::size_t>(v, k);
        };
        t["training.classifier_lr"] = [](auto& c, const auto& v, const auto& k) {
            c.training.classifier_optimizer.learning_rate = parse_real(v, k);
        };
        t["training.diffusion_lr"] = [](auto& c, const auto& v, const auto& k) {
            c.training.diffusion_optimizer.learning_rate = parse_real(v, k);
        };
        t["training.classifier_weight_decay"] = [](auto& c, const auto& v, const auto& k) {
            c.training.classifier_optimizer.weight_decay = parse_real(v, k);
        };
        t["training.diffusion_weight_decay"] = [](auto& c, const auto& v, const auto& k) {
            c.training.diffusion_optimizer.weight_decay = parse_real(v, k);
        };
        t["training.classifier_hidden"] = [](auto& c, const auto& v, const auto& k) {
            c.training.classifier_hidden = parse_sizes(v, k);
        };
        t["training.denoiser_hidden"] = [](auto& c, const auto& v, const auto& k) {
            c.training.denoiser_hidden = parse_sizes(v, k);
        };
        t["training.time_dim"] = [](auto& c, const auto& v, const auto& k) {
            c.training.time_dim = parse_integer<std::size_t>(v, k);
        };
        t["training.class_dim"] = [](auto& c, const auto& v, const auto& k) {
            c.training.class_dim = parse_integer<std::size_t>(v, k);
        };
        t["training.replay"] = [](auto& c, const auto& v, const auto& k) { c.training.replay = parse_flag(v, k); };
        t["training.train_final_diffusion"] = [](auto& c, const auto& v, const auto& k) {
            c.training.train_final_diffusion = parse_flag(v, k);
        };
        t["training.loss_log_interval"] = [](auto& c, const auto& v, const auto& k) {
            c.training.loss_log_interval = parse_integer<std::size_t>(v, k);
        };
        // diffusion
        t["diffusion.timesteps"] = [](auto& c, const auto& v, const auto& k) {
            c.training.diffusion_timesteps = parse_integer<int>(v, k);
        };
        t["diffusion.beta_start"] = [](auto& c, const auto& v, const auto& k) {
            c.training.beta_start = parse_real(v, k);
        };
        t["diffusion.beta_end"] = [](auto& c, const auto& v, const auto& k) { c.training.beta_end = parse_real(v, k); };
        // guidance
        t["guidance.variant"] = [](auto& c, const auto& v, const auto& k) {
            c.training.guidance.variant = rethrow_with_key(k, [&] { return parse_variant(trim(v)); });
        };
        t["guidance.scale"] = [](auto& c, const auto& v, const auto& k) { c.training.guidance.scale = parse_real(v, k); };
        t["guidance.backprop_denoiser"] = [](auto& c, const auto& v, const auto& k) {
            c.training.guidance.backprop_denoiser = parse_flag(v, k);
        };
        // sampler
        t["sampler.ddim_steps"] = [](auto& c, const auto& v, const auto& k) {
            c.training.sampler.ddim_steps = parse_integer<int>(v, k);
        };
        // experiment
        t["experiment.seeds"] = [](auto& c, const auto& v, const auto& k) {
            c.seeds.clear();
            for (const auto& p : split_list(v)) c.seeds.push_back(parse_integer<std::uint64_t>(p, k));
        };
        t["experiment.output_dir"] = [](auto& c, const auto& v, const auto&) { c.output_dir = trim(v); };
        t["experiment.compare"] = [](auto& c, const auto& v, const auto& k) {
            c.compare = split_list(v);
            for (auto& name : c.compare) {
                std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::toupper(ch); });
                if (name != "FINETUNE") rethrow_with_key(k, [&] { return parse_variant(name); });
            }
        };
        t["experiment.record_timing"] = [](auto& c, const auto& v, const auto& k) {
            c.record_timing = parse_flag(v, k);
        };
        t["experiment.archive_samples"] = [](auto& c, const auto& v, const auto& k) {
            c.archive_samples = parse_flag(v, k);
        };
        t["experiment.save_checkpoints"] = [](auto& c, const auto& v, const auto& k) {
            c.save_checkpoints = parse_flag(v, k);
        };
        // probe
        t["probe.epsilon"] = [](auto& c, const auto& v, const auto& k) { c.probe.epsilon = parse_real(v, k); };
        t["probe.samples_per_class"] = [](auto& c, const auto& v, const auto& k) {
            c.probe.samples_per_class = parse_integer<std::size_t>(v, k);
        };
        t["probe.variants"] = [](auto& c, const auto& v, const auto& k) {
            c.probe.variants.clear();
            for (const auto& p : split_list(v)) {
                c.probe.variants.push_back(rethrow_with_key(k, [&] { return parse_variant(p); }));
            }
        };
        // dual
        t["dual.c1"] = [](auto& c, const auto& v, const auto& k) { c.dual.c1 = parse_integer<int>(v, k); };
        t["dual.c2"] = [](auto& c, const auto& v, const auto& k) { c.dual.c2 = parse_integer<int>(v, k); };
        t["dual.s1"] = [](auto& c, const auto& v, const auto& k) { c.dual.s1 = parse_real(v, k); };
        t["dual.s2"] = [](auto& c, const auto& v, const auto& k) { c.dual.s2 = parse_real(v, k); };
        t["dual.count"] = [](auto& c, const auto& v, const auto& k) {
            c.dual.count = parse_integer<std::size_t>(v, k);
        };
        t["dual.diffusion_steps"] = [](auto& c, const auto& v, const auto& k) {
            c.dual.diffusion_steps = parse_integer<std::size_t>(v, k);
        };
        t["dual.classifier_steps"] = [](auto& c, const auto& v, const auto& k) {
            c.dual.classifier_steps = parse_integer<std::size_t>(v, k);
        };
        return t;
    }();
    return table;
}

void set_key(ExperimentConfig& config, const std::string& key, const std::string& value) {
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'", key);
    it->second(config, value, key);
}

// Maps a ConfigError raised by validation to the file's section.key name.
std::string qualified_key(const std::string& key) {
    static const std::map<std::string, std::string> names = {
        {"generator", "dataset.generator"},
        {"dimension", "dataset.dimension"},
        {"classes", "dataset.classes"},
        {"samples_per_class", "dataset.samples_per_class"},
        {"noise_std", "dataset.noise_std"},
        {"classes_per_task", "scenario.classes_per_task"},
        {"classifier_steps", "training.classifier_steps"},
        {"diffusion_steps", "training.diffusion_steps"},
        {"generation_interval", "training.generation_interval"},
        {"batch_size", "training.batch_size"},
        {"diffusion_batch_size", "training.diffusion_batch_size"},
        {"classifier_lr", "training.classifier_lr"},
        {"diffusion_lr", "training.diffusion_lr"},
        {"classifier_weight_decay", "training.classifier_weight_decay"},
        {"diffusion_weight_decay", "training.diffusion_weight_decay"},
        {"classifier_hidden", "training.classifier_hidden"},
        {"denoiser_hidden", "training.denoiser_hidden"},
        {"time_dim", "training.time_dim"},
        {"class_dim", "training.class_dim"},
        {"loss_log_interval", "training.loss_log_interval"},
        {"num_steps", "diffusion.timesteps"},
        {"beta_start", "diffusion.beta_start"},
        {"scale", "guidance.scale"},
        {"ddim_steps", "sampler.ddim_steps"},
    };
    const auto it = names.find(key);
    return it == names.end() ? key : it->second;
}

std::string list_text(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

}  // namespace

void ExperimentConfig::validate() const {
    try {
        dataset.validate();
        training.validate();
        if (classes_per_task == 0 || dataset.classes % classes_per_task != 0) {
            throw ConfigError("classes_per_task must divide the class count", "classes_per_task");
        }
        if (training.batch_size < dataset.classes) {
            throw ConfigError("batch_size must be at least the class count so every class fits in a batch",
                              "batch_size");
        }
    } catch (const ConfigError& e) {
        const std::string key = qualified_key(e.key());
        throw ConfigError("config: '" + key + "': " + e.what(), key);
    }
    if (seeds.empty()) throw ConfigError("config: 'experiment.seeds' must list at least one seed", "experiment.seeds");
    if (!(probe.epsilon > 0.0)) throw ConfigError("config: 'probe.epsilon' must be positive", "probe.epsilon");
    if (probe.samples_per_class == 0) {
        throw ConfigError("config: 'probe.samples_per_class' must be positive", "probe.samples_per_class");
    }
    if (probe.variants.empty()) throw ConfigError("config: 'probe.variants' must not be empty", "probe.variants");
    const auto n_cls = static_cast<int>(dataset.classes);
    if (dual.c1 < 0 || dual.c1 >= n_cls) throw ConfigError("config: 'dual.c1' outside the label space", "dual.c1");
    if (dual.c2 < 0 || dual.c2 >= n_cls) throw ConfigError("config: 'dual.c2' outside the label space", "dual.c2");
    if (dual.c1 == dual.c2) throw ConfigError("config: 'dual.c2' must differ from dual.c1", "dual.c2");
    if (dual.s1 < 0.0) throw ConfigError("config: 'dual.s1' must be nonnegative", "dual.s1");
    if (dual.s2 < 0.0) throw ConfigError("config: 'dual.s2' must be nonnegative", "dual.s2");
    if (dual.count == 0) throw ConfigError("config: 'dual.count' must be positive", "dual.count");
    if (dual.diffusion_steps == 0) {
        throw ConfigError("config: 'dual.diffusion_steps' must be positive", "dual.diffusion_steps");
    }
    if (dual.classifier_steps == 0) {
        throw ConfigError("config: 'dual.classifier_steps' must be positive", "dual.classifier_steps");
    }
    const auto names = arms();
    for (std::size_t a = 0; a < names.size(); ++a) {
        for (std::size_t b = a + 1; b < names.size(); ++b) {
            if (names[a].name == names[b].name) {
                throw ConfigError("config: arm '" + names[a].name + "' listed twice", "experiment.compare");
            }
        }
    }
}

Scenario ExperimentConfig::make_scenario(std::uint64_t seed) const {
    DatasetSpec spec = dataset;
    spec.seed = dataset_seed.value_or(seed);
    const GeneratedData gen = generate(spec);
    return split_tasks(gen.data, spec.classes, classes_per_task, derive_seed(spec.seed, Stream::Split));
}

TrainingConfig ExperimentConfig::training_for(std::uint64_t seed) const {
    TrainingConfig t = training;
    t.seed = seed;
    return t;
}

ClassifierArm arm_from_name(const std::string& name, double scale, bool backprop_denoiser) {
    std::string upper = name;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    if (upper == "FINETUNE") return {"FINETUNE", GuidanceConfig{}, false};
    const GuidanceVariant v = parse_variant(upper);
    return {std::string(variant_name(v)), GuidanceConfig{v, scale, backprop_denoiser}, true};
}

std::vector<ClassifierArm> ExperimentConfig::arms() const {
    std::vector<ClassifierArm> out;
    if (training.replay) {
        out.push_back({std::string(variant_name(training.guidance.variant)), training.guidance, true});
    } else {
        out.push_back({"FINETUNE", training.guidance, false});
    }
    for (const auto& name : compare) {
        out.push_back(arm_from_name(name, training.guidance.scale, training.guidance.backprop_denoiser));
    }
    return out;
}

std::string ExperimentConfig::to_text() const {
    std::ostringstream o;
    const auto& t = training;
    o << "[dataset]\n"
      << "generator = " << generator_name(dataset.generator) << "\n"
      << "dimension = " << dataset.dimension << "\n"
      << "classes = " << dataset.classes << "\n"
      << "samples_per_class = " << dataset.samples_per_class << "\n"
      << "noise_std = " << format_number(dataset.noise_std) << "\n"
      << "seed = " << (dataset_seed ? std::to_string(*dataset_seed) : std::string("run")) << "\n\n"
      << "[scenario]\n"
      << "classes_per_task = " << classes_per_task << "\n\n"
      << "[training]\n"
      << "classifier_steps = " << t.classifier_steps << "\n"
      << "diffusion_steps = " << t.diffusion_steps << "\n"
      << "generation_interval = "
      << (t.generation_interval == kRegenerateOnce ? std::string("inf") : std::to_string(t.generation_interval))
      << "\n"
      << "batch_size = " << t.batch_size << "\n"
      << "diffusion_batch_size = " << t.diffusion_batch_size << "\n"
      << "classifier_lr = " << format_number(t.classifier_optimizer.learning_rate) << "\n"
      << "diffusion_lr = " << format_number(t.diffusion_optimizer.learning_rate) << "\n"
      << "classifier_weight_decay = " << format_number(t.classifier_optimizer.weight_decay) << "\n"
      << "diffusion_weight_decay = " << format_number(t.diffusion_optimizer.weight_decay) << "\n"
      << "classifier_hidden = " << list_text(t.classifier_hidden) << "\n"
      << "denoiser_hidden = " << list_text(t.denoiser_hidden) << "\n"
      << "time_dim = " << t.time_dim << "\n"
      << "class_dim = " << t.class_dim << "\n"
      << "replay = " << (t.replay ? "true" : "false") << "\n"
      << "train_final_diffusion = " << (t.train_final_diffusion ? "true" : "false") << "\n"
      << "loss_log_interval = " << t.loss_log_interval << "\n\n"
      << "[diffusion]\n"
      << "timesteps = " << t.diffusion_timesteps << "\n"
      << "beta_start = " << format_number(t.beta_start) << "\n"
      << "beta_end = " << format_number(t.beta_end) << "\n\n"
      << "[guidance]\n"
      << "variant = " << variant_name(t.guidance.variant) << "\n"
      << "scale = " << format_number(t.guidance.scale) << "\n"
      << "backprop_denoiser = " << (t.guidance.backprop_denoiser ? "true" : "false") << "\n\n"
      << "[sampler]\n"
      << "ddim_steps = " << t.sampler.ddim_steps << "\n\n"
      << "[experiment]\n"
      << "seeds = ";
    for (std::size_t i = 0; i < seeds.size(); ++i) o << (i ? "," : "") << seeds[i];
    o << "\noutput_dir = " << output_dir.string() << "\n"
      << "compare = ";
    for (std::size_t i = 0; i < compare.size(); ++i) o << (i ? "," : "") << compare[i];
    o << "\nrecord_timing = " << (record_timing ? "true" : "false") << "\n"
      << "archive_samples = " << (archive_samples ? "true" : "false") << "\n"
      << "save_checkpoints = " << (save_checkpoints ? "true" : "false") << "\n\n"
      << "[probe]\n"
      << "epsilon = " << format_number(probe.epsilon) << "\n"
      << "samples_per_class = " << probe.samples_per_class << "\n"
      << "variants = ";
    for (std::size_t i = 0; i < probe.variants.size(); ++i) o << (i ? "," : "") << variant_name(probe.variants[i]);
    o << "\n\n[dual]\n"
      << "c1 = " << dual.c1 << "\n"
      << "c2 = " << dual.c2 << "\n"
      << "s1 = " << format_number(dual.s1) << "\n"
      << "s2 = " << format_number(dual.s2) << "\n"
      << "count = " << dual.count << "\n"
      << "diffusion_steps = " << dual.diffusion_steps << "\n"
      << "classifier_steps = " << dual.classifier_steps << "\n";
    return o.str();
}

ExperimentConfig parse_config(std::string_view text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
    }
    ExperimentConfig config;
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            throw ConfigError("config: key '" + section + "' must sit inside a [section]", section);
        }
        for (const auto& [key, node] : body) set_key(config, section + "." + key, node.get_value<std::string>());
    }
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot read config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void apply_override(ExperimentConfig& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError("override '" + std::string(assignment) + "' must look like section.key=value");
    }
    set_key(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    config.validate();
}

}  // namespace guidelab
