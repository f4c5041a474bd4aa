// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include <CLI11.hpp>

#include "guidelab/experiment.hpp"
#include "guidelab/simd/kernels.hpp"

int main(int argc, char** argv) {
    CLI::App app{"guidelab: class-incremental learning with guided diffusion rehearsal"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "guidelab 0.1.0");

    std::string config_path;
    std::string run_dir;
    std::vector<std::string> overrides;
    std::string axis;
    std::vector<double> values;

    auto* run = app.add_subcommand("run", "train every seed of a config and write records plus summary.csv");
    run->add_option("config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    run->add_option("--set", overrides, "override one entry, e.g. --set training.classifier_steps=500");

    auto* sweep = app.add_subcommand("sweep", "repeat a run across values of one setting");
    sweep->add_option("config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--axis", axis, "scale, ddim_steps or interval")->required();
    sweep->add_option("--values", values, "values to try, e.g. --values 0 0.5 2")->required()->delimiter(',');
    sweep->add_option("--set", overrides, "override one entry");

    auto* probe = app.add_subcommand("probe", "boundary statistics of rehearsal samples for a finished run");
    probe->add_option("run_dir", run_dir, "output directory of `run`")->required()->check(CLI::ExistingDirectory);

    auto* dual = app.add_subcommand("demo-dual", "guide an unconditional model toward a class it never saw");
    dual->add_option("config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    dual->add_option("--set", overrides, "override one entry");

    auto* report = app.add_subcommand("report", "rebuild summary.csv from record files");
    report->add_option("run_dir", run_dir, "output directory of `run`")->required()->check(CLI::ExistingDirectory);

    std::string kernels = "auto";
    app.add_option("--kernels", kernels, "compute kernels: auto, scalar or avx2")
        ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    using guidelab::kernels::Backend;
    if (kernels == "scalar") guidelab::kernels::set_backend(Backend::Scalar);
    if (kernels == "avx2") {
        if (!guidelab::kernels::avx2_available()) {
            std::cerr << "error: AVX2 kernels are not available on this machine\n";
            return 2;
        }
        guidelab::kernels::set_backend(Backend::Avx2);
    }

    if (*run) return guidelab::cmd_run(config_path, overrides);
    if (*sweep) return guidelab::cmd_sweep(config_path, axis, values, overrides);
    if (*probe) return guidelab::cmd_probe(run_dir);
    if (*dual) return guidelab::cmd_demo_dual(config_path, overrides);
    if (*report) return guidelab::cmd_report(run_dir);
    return 2;
}
