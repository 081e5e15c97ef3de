#pragma once

// Offline figure artifacts: trajectory overlay and error-over-time curve,
// each emitted as both SVG and CSV. Also the estimate file format.

#include <gprloc/app/pipeline.hpp>

#include <iomanip>

namespace gprloc::app {

inline void write_estimate(const std::filesystem::path& path,
                           const TrajectoryEstimate& est) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write estimate: " + path.string());
    f.precision(17);
    f << "# model = " << est.model << "\n";
    f << "# config_hash = " << est.config_hash << "\n";
    f << "# dataset_hash = " << est.dataset_hash << "\n";
    f << "timestamp,x,y,z,qw,qx,qy,qz\n";
    for (const auto& p : est.poses) {
        const auto& t = p.pose.translation();
        const Eigen::Quaterniond q = p.pose.rotation().quaternion();
        f << p.t << ',' << t.x() << ',' << t.y() << ',' << t.z() << ',' << q.w() << ','
          << q.x() << ',' << q.y() << ',' << q.z() << "\n";
    }
}

inline TrajectoryEstimate read_estimate(const std::filesystem::path& path) {
    auto f = detail::open_or_throw(path);
    TrajectoryEstimate est;
    std::string line;
    bool header_seen = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(1, eq - 1);
            const std::string value = line.substr(eq + 1);
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t");
                const auto e = s.find_last_not_of(" \t");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            const std::string k = trim(key), v = trim(value);
            if (k == "model") est.model = v;
            else if (k == "config_hash") est.config_hash = std::stoull(v);
            else if (k == "dataset_hash") est.dataset_hash = std::stoull(v);
            continue;
        }
        if (!header_seen) {
            if (line != "timestamp,x,y,z,qw,qx,qy,qz")
                throw DataError("estimate file: bad header");
            header_seen = true;
            continue;
        }
        const auto c = detail::split_csv(line);
        if (c.size() != 8) throw DataError("estimate file: wrong column count");
        TimedPose p;
        p.t = detail::parse_double(c[0], "estimate");
        const Vec3 tr(detail::parse_double(c[1], "estimate"),
                      detail::parse_double(c[2], "estimate"),
                      detail::parse_double(c[3], "estimate"));
        Eigen::Quaterniond q(detail::parse_double(c[4], "estimate"),
                             detail::parse_double(c[5], "estimate"),
                             detail::parse_double(c[6], "estimate"),
                             detail::parse_double(c[7], "estimate"));
        p.pose = Pose3(Rot3(q.normalized()), tr);
        est.poses.push_back(p);
    }
    if (!header_seen) throw DataError("estimate file: missing header");
    return est;
}

namespace detail {

struct SvgCanvas {
    std::ostringstream body;
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    static constexpr int width = 720, height = 480, margin = 40;

    void extend(double x, double y) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
    }

    std::pair<double, double> map(double x, double y) const {
        const double sx = (max_x > min_x) ? (width - 2.0 * margin) / (max_x - min_x) : 1.0;
        const double sy = (max_y > min_y) ? (height - 2.0 * margin) / (max_y - min_y) : 1.0;
        const double s = std::min(sx, sy);
        return {margin + (x - min_x) * s, height - margin - (y - min_y) * s};
    }

    void polyline(const std::vector<std::pair<double, double>>& pts,
                  const std::string& color) {
        body << "  <polyline fill=\"none\" stroke=\"" << color
             << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : pts) {
            const auto [px, py] = map(x, y);
            body << px << ',' << py << ' ';
        }
        body << "\"/>\n";
    }

    void label(double px, double py, const std::string& text, const std::string& color) {
        body << "  <text x=\"" << px << "\" y=\"" << py << "\" fill=\"" << color
             << "\" font-family=\"monospace\" font-size=\"12\">" << text << "</text>\n";
    }

    void write(const std::filesystem::path& path, const std::string& title) {
        std::ofstream f(path);
        if (!f) throw DataError("cannot write svg: " + path.string());
        f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
          << "\" height=\"" << height << "\">\n";
        f << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        f << "  <text x=\"" << margin << "\" y=\"20\" font-family=\"monospace\" "
             "font-size=\"14\">" << title << "</text>\n";
        f << body.str();
        f << "</svg>\n";
    }
};

} // namespace detail

// Truth-vs-estimate x/y overlay (the Fig. 4 counterpart).
inline void plot_trajectory_overlay(const std::filesystem::path& out_dir,
                                    const TrajectoryEstimate& est,
                                    const std::vector<TimedPose>& truth) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    {
        std::ofstream f(out_dir / "trajectory.csv");
        f.precision(17);
        f << "timestamp,est_x,est_y,truth_x,truth_y\n";
        for (const auto& p : est.poses) {
            const Vec3 e = p.pose.translation();
            f << p.t << ',' << e.x() << ',' << e.y();
            if (!truth.empty()) {
                const Vec3 t = interpolate_pose(truth, p.t).translation();
                f << ',' << t.x() << ',' << t.y();
            } else {
                f << ",,";
            }
            f << "\n";
        }
    }

    detail::SvgCanvas svg;
    std::vector<std::pair<double, double>> est_pts, truth_pts;
    for (const auto& p : est.poses) {
        est_pts.emplace_back(p.pose.translation().x(), p.pose.translation().y());
        svg.extend(est_pts.back().first, est_pts.back().second);
    }
    for (const auto& p : truth) {
        truth_pts.emplace_back(p.pose.translation().x(), p.pose.translation().y());
        svg.extend(truth_pts.back().first, truth_pts.back().second);
    }
    if (!truth_pts.empty()) svg.polyline(truth_pts, "black");
    if (!est_pts.empty()) svg.polyline(est_pts, "crimson");
    svg.label(detail::SvgCanvas::margin, 36, "truth", "black");
    svg.label(detail::SvgCanvas::margin + 60, 36, "estimate (" + est.model + ")", "crimson");
    svg.write(out_dir / "trajectory.svg", "trajectory overlay");
}

// Error-over-time curve with loop-closure event marks (the Fig. 7
// counterpart): newest-state position error at each incremental step.
inline void plot_error_curve(const std::filesystem::path& out_dir,
                             const std::vector<StepRecord>& steps,
                             const std::vector<LoopClosureEvent>& closures) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    {
        std::ofstream f(out_dir / "ate_over_time.csv");
        f.precision(17);
        f << "timestamp,state_count,newest_error_m,update_ms,closures_added\n";
        for (const auto& s : steps)
            f << s.t << ',' << s.state_count << ',' << s.newest_error_m << ','
              << s.update_ms << ',' << s.closures_added << "\n";
    }

    detail::SvgCanvas svg;
    std::vector<std::pair<double, double>> pts;
    for (const auto& s : steps) {
        if (s.newest_error_m < 0) continue;
        pts.emplace_back(s.t, s.newest_error_m);
        svg.extend(s.t, s.newest_error_m);
    }
    svg.extend(pts.empty() ? 0 : pts.front().first, 0);  // keep zero in view
    if (!pts.empty()) svg.polyline(pts, "steelblue");
    for (const auto& ev : closures) {
        const auto [px, py] = svg.map(ev.t, svg.min_y);
        svg.body << "  <line x1=\"" << px << "\" y1=\"" << detail::SvgCanvas::margin
                 << "\" x2=\"" << px << "\" y2=\""
                 << detail::SvgCanvas::height - detail::SvgCanvas::margin
                 << "\" stroke=\"seagreen\" stroke-dasharray=\"4 3\"/>\n";
    }
    svg.label(detail::SvgCanvas::margin, 36, "position error [m]; dashes = loop closures",
              "steelblue");
    svg.write(out_dir / "ate_over_time.svg", "error over time");
}

} // namespace gprloc::app
