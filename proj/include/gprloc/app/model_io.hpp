#pragma once

// Text serialization of the learned registration model: filter bank kernels,
// linear head weights/bias, pixel-to-meter scale, and the gate threshold.

#include <gprloc/app/dataset.hpp>
#include <gprloc/regmodel.hpp>

namespace gprloc::app {

struct ModelFile {
    FilterBank bank;
    LinearHead head;
    double gate_threshold = 0.6;
};

inline void save_model(const std::filesystem::path& path, const ModelFile& m) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write model file: " + path.string());
    f.precision(17);
    const auto& kernels = m.bank.kernels();
    f << "gprloc-model 1\n";
    f << "k " << kernels.size() << "\n";
    for (const auto& ker : kernels) {
        f << "kernel " << ker.rows() << ' ' << ker.cols();
        for (int r = 0; r < ker.rows(); ++r)
            for (int c = 0; c < ker.cols(); ++c) f << ' ' << ker(r, c);
        f << "\n";
    }
    f << "weights";
    for (int i = 0; i < m.head.weights.size(); ++i) f << ' ' << m.head.weights[i];
    f << "\n";
    f << "bias " << m.head.bias << "\n";
    f << "pixel_to_meter " << m.head.pixel_to_meter << "\n";
    f << "gate_threshold " << m.gate_threshold << "\n";
}

inline ModelFile load_model(const std::filesystem::path& path) {
    auto f = detail::open_or_throw(path);
    std::string tag;
    int version = 0;
    f >> tag >> version;
    if (tag != "gprloc-model" || version != 1)
        throw DataError("not a gprloc model file: " + path.string());

    ModelFile m;
    int k = 0;
    f >> tag >> k;
    if (tag != "k" || k <= 0) throw DataError("model file: bad filter count");

    std::vector<Eigen::MatrixXd> kernels;
    for (int i = 0; i < k; ++i) {
        int rows = 0, cols = 0;
        f >> tag >> rows >> cols;
        if (tag != "kernel" || rows <= 0 || cols <= 0)
            throw DataError("model file: bad kernel record");
        Eigen::MatrixXd ker(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) f >> ker(r, c);
        kernels.push_back(std::move(ker));
    }
    m.bank = FilterBank::from_kernels(std::move(kernels));

    f >> tag;
    if (tag != "weights") throw DataError("model file: missing weights");
    m.head.weights.resize(k);
    for (int i = 0; i < k; ++i) f >> m.head.weights[i];
    f >> tag >> m.head.bias;
    if (tag != "bias") throw DataError("model file: missing bias");
    f >> tag >> m.head.pixel_to_meter;
    if (tag != "pixel_to_meter") throw DataError("model file: missing pixel_to_meter");
    f >> tag >> m.gate_threshold;
    if (tag != "gate_threshold") throw DataError("model file: missing gate_threshold");
    if (!f) throw DataError("model file: truncated");
    return m;
}

} // namespace gprloc::app
