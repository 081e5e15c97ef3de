// gprloc command line: simulate | preprocess | train | localize | eval | plot
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <gprloc/app.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace gprloc;
using namespace gprloc::app;

WaypointTrajectory trajectory_from_config(const Config& c) {
    const std::string spec = c.get_string("simulate.waypoints", "");
    if (spec.empty())
        throw DataError("config: simulate.waypoints required (t,x,y; t,x,y; ...)");
    std::vector<Waypoint> pts;
    std::istringstream in(spec);
    std::string triple;
    while (std::getline(in, triple, ';')) {
        const auto cells = app::detail::split_csv(triple);
        if (cells.size() != 3)
            throw DataError("config simulate.waypoints: expected t,x,y triples");
        Waypoint w;
        w.t = app::detail::parse_double(cells[0], "simulate.waypoints");
        w.x = app::detail::parse_double(cells[1], "simulate.waypoints");
        w.y = app::detail::parse_double(cells[2], "simulate.waypoints");
        pts.push_back(w);
    }
    return WaypointTrajectory(std::move(pts));
}

int cmd_simulate(const Config& c, const std::filesystem::path& out, uint64_t seed) {
    WorldConfig world_cfg;
    const std::string preset = c.get_string("simulate.world", "dense");
    if (preset == "dense") world_cfg = WorldConfig::feature_dense();
    else if (preset == "sparse") world_cfg = WorldConfig::feature_sparse();
    else throw DataError("config simulate.world: expected dense|sparse");
    world_cfg.extent_m = c.get_double("simulate.extent_m", world_cfg.extent_m);

    SensorConfig sensor;
    sensor.samples_per_trace = c.get_int("simulate.samples_per_trace", 256);
    sensor.time_window_ns = c.get_double("simulate.time_window_ns", 60.0);
    sensor.noise_sigma = c.get_double("simulate.trace_noise_sigma", 0.0);
    sensor.wow_dc = c.get_double("simulate.wow_dc", 0.02);
    sensor.wow_amplitude = c.get_double("simulate.wow_amplitude", 0.02);
    sensor.ringing_amplitude = c.get_double("simulate.ringing_amplitude", 0.1);
    sensor.trigger_spacing_m = c.get_double("simulate.trigger_spacing_m", 0.05);

    RunNoiseSpec spec;
    spec.imu_rate_hz = c.get_double("simulate.imu_rate_hz", 200.0);
    spec.accel_noise = c.get_double("simulate.accel_noise", 0.0);
    spec.gyro_noise = c.get_double("simulate.gyro_noise", 0.0);
    spec.accel_bias_mag = c.get_double("simulate.accel_bias_mag", 0.0);
    spec.gyro_bias_mag = c.get_double("simulate.gyro_bias_mag", 0.0);
    spec.bias_walk = c.get_double("simulate.bias_walk", 0.0);
    spec.wheel_scale_sigma = c.get_double("simulate.wheel_scale_sigma", 0.0);

    const auto world = build_world(seed, world_cfg);
    const auto traj = trajectory_from_config(c);
    const RawDataset data = simulate_run(world, traj, sensor, spec, seed);

    std::map<std::string, std::string> meta;
    meta["seed"] = std::to_string(seed);
    meta["config_hash"] = std::to_string(c.hash());
    meta["world"] = preset;
    write_dataset(out, data, meta);
    std::cout << "wrote " << data.gpr.size() << " traces, " << data.imu.size()
              << " imu samples to " << out.string() << "\n";
    return 0;
}

int cmd_preprocess(const Config& c, const std::filesystem::path& dataset,
                   const std::filesystem::path& out) {
    const RunConfig cfg = RunConfig::from_config(c);
    const RawDataset data = read_dataset(dataset);
    if (data.gpr.empty()) throw DataError("dataset has no GPR records");

    std::filesystem::create_directories(out);
    std::vector<Trace> traces;
    std::vector<double> dist;
    std::deque<Trace> avg;
    const size_t avg_n = std::max(1, cfg.preprocess.local_average_window);
    for (const auto& rec : data.gpr) {
        avg.push_back(rec.trace);
        if (avg.size() > avg_n) avg.pop_front();
        Trace p = local_average({avg.begin(), avg.end()});
        p = dewow(p, cfg.preprocess);
        p = sec_gain(p, cfg.preprocess.gain_a, cfg.preprocess.gain_b);
        traces.push_back(std::move(p));
        dist.push_back(rec.wheel_distance_m);
    }

    // cut non-overlapping submaps over the whole run and dump them
    int count = 0;
    std::ofstream index(out / "submaps.csv");
    index << "submap,start_distance_m,salience\n";
    for (double d0 = dist.front(); d0 + cfg.submap.length_m <= dist.back() + 1e-9;
         d0 += cfg.submap.length_m) {
        Submap s = resample_uniform(traces, dist, d0, cfg.submap.length_m,
                                    cfg.submap.column_spacing_m);
        MeanTraceState mt;
        s.image = remove_mean_trace(s.image, mt);
        s.image = threshold(s.image, cfg.preprocess.threshold_percentile);

        char name[32];
        std::snprintf(name, sizeof name, "submap_%03d.csv", count);
        std::ofstream f(out / name);
        f.precision(10);
        for (int r = 0; r < s.image.image.rows(); ++r) {
            for (int col = 0; col < s.image.image.cols(); ++col)
                f << (col ? "," : "") << s.image.image(r, col);
            f << "\n";
        }
        index << count << ',' << d0 << ',' << salience(s, cfg.salience) << "\n";
        ++count;
    }
    std::cout << "wrote " << count << " submaps to " << out.string() << "\n";
    return 0;
}

int cmd_train(const Config& c, const std::vector<std::filesystem::path>& datasets,
              const std::filesystem::path& out, uint64_t seed) {
    RunConfig cfg = RunConfig::from_config(c);
    TrainOptions opt;
    opt.stride_m = c.get_double("train.stride_m", opt.stride_m);
    opt.max_pairs_per_dataset = c.get_int("train.max_pairs_per_dataset",
                                          opt.max_pairs_per_dataset);
    opt.split = c.get_double("train.split", opt.split);
    opt.huber_delta = c.get_double("train.huber_delta", opt.huber_delta);
    opt.filter_count = c.get_int("train.filter_count", opt.filter_count);
    opt.bank_seed = c.get_u64("train.bank_seed", opt.bank_seed);
    opt.seed = seed;

    std::vector<RawDataset> data;
    for (const auto& d : datasets) data.push_back(read_dataset(d));

    ModelFile model;
    const TrainReport report = train_command(data, cfg, opt, &model);

    std::filesystem::create_directories(out);
    save_model(out / "model.txt", model);
    {
        std::ofstream f(out / "train_report.txt");
        f << report.to_text();
    }
    std::cout << report.to_text();
    std::cout << "wrote " << (out / "model.txt").string() << "\n";
    return 0;
}

int cmd_localize(const Config& c, const std::filesystem::path& dataset,
                 const std::string& model_arg, const std::filesystem::path& out) {
    RunConfig cfg = RunConfig::from_config(c);
    if (!model_arg.empty()) {
        // --model is either a mode name or a model file path (learned)
        try {
            cfg.model = parse_model_kind(model_arg);
        } catch (const DataError&) {
            cfg.model = ModelKind::learned;
        }
    }

    ModelFile model;
    const ModelFile* model_ptr = nullptr;
    if (cfg.model == ModelKind::learned) {
        const std::string path = (!model_arg.empty() && model_arg != "learned")
                                     ? model_arg
                                     : c.get_string("model.file", "");
        if (path.empty()) throw DataError("learned model requires --model <file>");
        model = load_model(path);
        model_ptr = &model;
    }

    const RawDataset data = read_dataset(dataset);
    PipelineResult res = run_pipeline(data, cfg, model_ptr);
    res.estimate.dataset_hash = dataset_hash(dataset);

    std::filesystem::create_directories(out);
    write_estimate(out / "estimate.csv", res.estimate);
    plot_error_curve(out, res.steps, res.closures);
    {
        std::ofstream f(out / "closures.csv");
        f.precision(17);
        f << "t,state_i,state_j,translation_m,confidence,flipped\n";
        for (const auto& ev : res.closures)
            f << ev.t << ',' << ev.state_i << ',' << ev.state_j << ','
              << ev.translation_m << ',' << ev.confidence << ',' << ev.flipped << "\n";
    }
    std::cout << "model=" << res.estimate.model << " states=" << res.estimate.poses.size()
              << " submaps=" << res.num_submaps << " salient=" << res.num_salient
              << " gated=" << res.gated_pairs.size()
              << " closures=" << res.closures.size() << "\n";
    return 0;
}

int cmd_eval(const std::filesystem::path& dataset, const std::filesystem::path& out) {
    const TrajectoryEstimate est = read_estimate(out / "estimate.csv");
    const uint64_t have = dataset_hash(dataset);
    if (est.dataset_hash != 0 && est.dataset_hash != have)
        throw DataError("estimate was produced from a different dataset (hash mismatch)");
    const RawDataset data = read_dataset(dataset);
    const double ate = ate_rmse(est.poses, data.truth);
    std::cout.setf(std::ios::fixed);
    std::cout.precision(4);
    std::cout << "ATE RMSE: " << ate << " m\n";
    return 0;
}

int cmd_plot(const std::filesystem::path& dataset, const std::filesystem::path& out) {
    const TrajectoryEstimate est = read_estimate(out / "estimate.csv");
    const RawDataset data = read_dataset(dataset);
    plot_trajectory_overlay(out, est, data.truth);
    std::cout << "wrote " << (out / "trajectory.svg").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App cli{"GPR localization toolkit"};
    cli.require_subcommand(1);

    std::string config_path, model_arg, out_dir;
    std::vector<std::string> dataset_dirs;
    uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub, bool needs_dataset, bool needs_out) {
        sub->add_option("--config", config_path, "configuration file");
        auto* ds = sub->add_option("--dataset", dataset_dirs, "dataset directory");
        if (needs_dataset) ds->required();
        auto* o = sub->add_option("--out", out_dir, "output directory");
        if (needs_out) o->required();
        sub->add_option("--seed", seed, "rng seed");
        sub->add_option("--model", model_arg, "model kind or model file");
    };

    add_common(cli.add_subcommand("simulate", "generate a synthetic dataset"), false, true);
    add_common(cli.add_subcommand("preprocess", "dump preprocessed submaps"), true, true);
    add_common(cli.add_subcommand("train", "fit the learned registration model"), true, true);
    add_common(cli.add_subcommand("localize", "run the localization pipeline"), true, true);
    add_common(cli.add_subcommand("eval", "report ATE RMSE for an estimate"), true, true);
    add_common(cli.add_subcommand("plot", "emit trajectory overlay figures"), true, true);

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return cli.exit(e);  // --help
        cli.exit(e);
        return 1;
    }

    try {
        Config cfg;
        if (!config_path.empty()) cfg = Config::parse_file(config_path);
        if (cfg.has("seed") && seed == 0) seed = cfg.get_u64("seed", 0);
        cfg.set("seed", std::to_string(seed));

        if (cli.got_subcommand("simulate")) return cmd_simulate(cfg, out_dir, seed);
        if (cli.got_subcommand("preprocess"))
            return cmd_preprocess(cfg, dataset_dirs.at(0), out_dir);
        if (cli.got_subcommand("train")) {
            std::vector<std::filesystem::path> ds(dataset_dirs.begin(), dataset_dirs.end());
            return cmd_train(cfg, ds, out_dir, seed);
        }
        if (cli.got_subcommand("localize"))
            return cmd_localize(cfg, dataset_dirs.at(0), model_arg, out_dir);
        if (cli.got_subcommand("eval")) return cmd_eval(dataset_dirs.at(0), out_dir);
        if (cli.got_subcommand("plot")) return cmd_plot(dataset_dirs.at(0), out_dir);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const gprloc::app::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const gprloc::IndeterminateSystemError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}
