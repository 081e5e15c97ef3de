#pragma once

// Dataset directory layout: meta + gpr.csv + imu.csv + wheel.csv + truth.csv.
// Plain CSV with mandatory headers, SI units (seconds, meters, m/s^2, rad/s),
// nanoseconds for trace time.

#include <gprloc/simworld.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace gprloc::app {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("bad number '" + s + "' in " + where);
    }
}

inline std::ifstream open_or_throw(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw DataError("missing file: " + p.string());
    return f;
}

inline void require_header(std::ifstream& f, const std::string& expected,
                           const std::string& file) {
    std::string line;
    if (!std::getline(f, line)) throw DataError(file + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected)
        throw DataError(file + ": bad header, expected '" + expected + "' got '" + line + "'");
}

inline void fmt(std::ostream& os) { os.precision(17); }

} // namespace detail

inline std::string gpr_header(int n_samples) {
    std::string h = "timestamp,wheel_distance_m";
    for (int i = 0; i < n_samples; ++i) h += ",sample_" + std::to_string(i);
    return h;
}

inline void write_dataset(const std::filesystem::path& dir, const RawDataset& data,
                          const std::map<std::string, std::string>& meta) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    {
        std::ofstream f(dir / "meta");
        for (const auto& [k, v] : meta) f << k << " = " << v << "\n";
        if (!data.gpr.empty()) {
            f << "trace_samples = " << data.gpr.front().trace.samples.size() << "\n";
            f << "trace_dt_ns = " << data.gpr.front().trace.dt_ns << "\n";
        }
        f << "units = s,m,m/s^2,rad/s,ns\n";
    }
    {
        std::ofstream f(dir / "gpr.csv");
        detail::fmt(f);
        const int n = data.gpr.empty() ? 0 : static_cast<int>(data.gpr.front().trace.samples.size());
        f << gpr_header(n) << "\n";
        for (const auto& r : data.gpr) {
            f << r.t << ',' << r.wheel_distance_m;
            for (int i = 0; i < r.trace.samples.size(); ++i) f << ',' << r.trace.samples[i];
            f << "\n";
        }
    }
    {
        std::ofstream f(dir / "imu.csv");
        detail::fmt(f);
        f << "timestamp,ax,ay,az,gx,gy,gz\n";
        for (const auto& s : data.imu)
            f << s.timestamp << ',' << s.accel.x() << ',' << s.accel.y() << ',' << s.accel.z()
              << ',' << s.gyro.x() << ',' << s.gyro.y() << ',' << s.gyro.z() << "\n";
    }
    {
        std::ofstream f(dir / "wheel.csv");
        detail::fmt(f);
        f << "timestamp,cumulative_distance_m\n";
        for (const auto& w : data.wheel) f << w.t << ',' << w.value << "\n";
    }
    {
        std::ofstream f(dir / "truth.csv");
        detail::fmt(f);
        f << "timestamp,x,y,z,qw,qx,qy,qz\n";
        for (const auto& p : data.truth) {
            const auto& t = p.pose.translation();
            const Eigen::Quaterniond q = p.pose.rotation().quaternion();
            f << p.t << ',' << t.x() << ',' << t.y() << ',' << t.z() << ',' << q.w() << ','
              << q.x() << ',' << q.y() << ',' << q.z() << "\n";
        }
    }
}

inline std::map<std::string, std::string> read_meta(const std::filesystem::path& dir) {
    auto f = detail::open_or_throw(dir / "meta");
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(f, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

inline RawDataset read_dataset(const std::filesystem::path& dir) {
    RawDataset out;
    const auto meta = read_meta(dir);
    const auto it = meta.find("trace_dt_ns");
    const double dt_ns = it != meta.end() ? detail::parse_double(it->second, "meta") : 0.0;

    auto check_increasing = [](double prev, double t, const std::string& file) {
        if (t <= prev) throw DataError(file + ": timestamps not strictly increasing");
    };

    {
        auto f = detail::open_or_throw(dir / "gpr.csv");
        std::string line;
        if (!std::getline(f, line)) throw DataError("gpr.csv: empty file");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto header = detail::split_csv(line);
        if (header.size() < 2 || header[0] != "timestamp" || header[1] != "wheel_distance_m")
            throw DataError("gpr.csv: bad header");
        const int n = static_cast<int>(header.size()) - 2;
        for (int i = 0; i < n; ++i)
            if (header[2 + i] != "sample_" + std::to_string(i))
                throw DataError("gpr.csv: bad sample column header");

        double prev = -std::numeric_limits<double>::infinity();
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto cells = detail::split_csv(line);
            if (static_cast<int>(cells.size()) != n + 2)
                throw DataError("gpr.csv: wrong column count");
            GprRecord rec;
            rec.t = detail::parse_double(cells[0], "gpr.csv");
            check_increasing(prev, rec.t, "gpr.csv");
            prev = rec.t;
            rec.wheel_distance_m = detail::parse_double(cells[1], "gpr.csv");
            rec.trace.samples.resize(n);
            rec.trace.dt_ns = dt_ns;
            rec.trace.position_m = rec.wheel_distance_m;
            for (int i = 0; i < n; ++i)
                rec.trace.samples[i] = detail::parse_double(cells[2 + i], "gpr.csv");
            out.gpr.push_back(std::move(rec));
        }
    }
    {
        auto f = detail::open_or_throw(dir / "imu.csv");
        detail::require_header(f, "timestamp,ax,ay,az,gx,gy,gz", "imu.csv");
        std::string line;
        double prev = -std::numeric_limits<double>::infinity();
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto c = detail::split_csv(line);
            if (c.size() != 7) throw DataError("imu.csv: wrong column count");
            ImuSample s;
            s.timestamp = detail::parse_double(c[0], "imu.csv");
            check_increasing(prev, s.timestamp, "imu.csv");
            prev = s.timestamp;
            s.accel = Vec3(detail::parse_double(c[1], "imu.csv"),
                           detail::parse_double(c[2], "imu.csv"),
                           detail::parse_double(c[3], "imu.csv"));
            s.gyro = Vec3(detail::parse_double(c[4], "imu.csv"),
                          detail::parse_double(c[5], "imu.csv"),
                          detail::parse_double(c[6], "imu.csv"));
            out.imu.push_back(s);
        }
    }
    {
        auto f = detail::open_or_throw(dir / "wheel.csv");
        detail::require_header(f, "timestamp,cumulative_distance_m", "wheel.csv");
        std::string line;
        double prev = -std::numeric_limits<double>::infinity();
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto c = detail::split_csv(line);
            if (c.size() != 2) throw DataError("wheel.csv: wrong column count");
            TimedScalar w;
            w.t = detail::parse_double(c[0], "wheel.csv");
            check_increasing(prev, w.t, "wheel.csv");
            prev = w.t;
            w.value = detail::parse_double(c[1], "wheel.csv");
            out.wheel.push_back(w);
        }
    }
    {
        auto f = detail::open_or_throw(dir / "truth.csv");
        detail::require_header(f, "timestamp,x,y,z,qw,qx,qy,qz", "truth.csv");
        std::string line;
        double prev = -std::numeric_limits<double>::infinity();
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto c = detail::split_csv(line);
            if (c.size() != 8) throw DataError("truth.csv: wrong column count");
            TimedPose p;
            p.t = detail::parse_double(c[0], "truth.csv");
            check_increasing(prev, p.t, "truth.csv");
            prev = p.t;
            const Vec3 tr(detail::parse_double(c[1], "truth.csv"),
                          detail::parse_double(c[2], "truth.csv"),
                          detail::parse_double(c[3], "truth.csv"));
            Eigen::Quaterniond q(detail::parse_double(c[4], "truth.csv"),
                                 detail::parse_double(c[5], "truth.csv"),
                                 detail::parse_double(c[6], "truth.csv"),
                                 detail::parse_double(c[7], "truth.csv"));
            p.pose = Pose3(Rot3(q.normalized()), tr);
            out.truth.push_back(p);
        }
    }
    return out;
}

// FNV-1a over the raw bytes of the four stream files; identifies a dataset
// so eval can refuse to compare estimates from different data.
inline uint64_t dataset_hash(const std::filesystem::path& dir) {
    uint64_t h = 1469598103934665603ull;
    for (const char* name : {"gpr.csv", "imu.csv", "wheel.csv", "truth.csv"}) {
        auto f = detail::open_or_throw(dir / name);
        char buf[65536];
        while (f.read(buf, sizeof buf), f.gcount() > 0)
            for (std::streamsize i = 0; i < f.gcount(); ++i) {
                h ^= static_cast<unsigned char>(buf[i]);
                h *= 1099511628211ull;
            }
    }
    return h;
}

} // namespace gprloc::app
