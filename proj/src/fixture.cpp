#include "cimsim/fixture.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "cimsim/csv.hpp"
#include "cimsim/errors.hpp"
#include "cimsim/rng.hpp"

namespace fs = std::filesystem;

namespace cimsim {

namespace {

// Rows of the dim x dim Walsh-Hadamard matrix: mutually orthogonal +/-1
// patterns, so scaled class centers are pairwise equidistant.
MatD hadamard(int dim) {
    if (dim < 1 || (dim & (dim - 1)) != 0) throw ConfigError("fixture dim must be a power of two");
    MatD h = MatD::Ones(1, 1);
    while (h.rows() < dim) {
        const long n = h.rows();
        MatD next(2 * n, 2 * n);
        next.topLeftCorner(n, n) = h;
        next.topRightCorner(n, n) = h;
        next.bottomLeftCorner(n, n) = h;
        next.bottomRightCorner(n, n) = -h;
        h = std::move(next);
    }
    return h;
}

double percentile_range(const std::vector<VecD>& batches, bool is_signed) {
    CalibrationHistogram hist;
    for (const auto& b : batches) hist.add(b);
    auto r = finalize_calibration(hist, CalibrationMethod::pct(0.9999), 8, is_signed);
    return r.params.top_value();
}

}  // namespace

Dataset make_blobs(const FixtureSpec& spec, int count, std::uint64_t stream) {
    if (spec.classes > spec.dim) throw ConfigError("fixture needs classes <= dim");
    MatD centers = hadamard(spec.dim).topRows(spec.classes) *
                   (spec.center_radius / std::sqrt(static_cast<double>(spec.dim)));
    auto rng = make_stream({spec.seed, rng_tag::dataset, stream});
    std::normal_distribution<double> z01(0.0, 1.0);
    Dataset d;
    d.x.resize(count, spec.dim);
    d.y.resize(count);
    for (int i = 0; i < count; ++i) {
        const int c = i % spec.classes;
        d.y[i] = c;
        for (int k = 0; k < spec.dim; ++k) d.x(i, k) = centers(c, k) + z01(rng);
    }
    return d;
}

Model train_fixture(const FixtureSpec& spec, const Dataset& train) {
    const int n = static_cast<int>(train.x.rows());
    const int dim = spec.dim, hid = spec.hidden, cls = spec.classes;
    auto rng = make_stream({spec.seed, rng_tag::dataset, 1000});
    std::normal_distribution<double> z01(0.0, 1.0);

    MatD w1(dim, hid), w2(hid, cls);
    VecD b1 = VecD::Zero(hid), b2 = VecD::Zero(cls);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < hid; ++c) w1(r, c) = z01(rng) * std::sqrt(2.0 / dim);
    for (int r = 0; r < hid; ++r)
        for (int c = 0; c < cls; ++c) w2(r, c) = z01(rng) * std::sqrt(2.0 / hid);

    MatD onehot = MatD::Zero(n, cls);
    for (int i = 0; i < n; ++i) onehot(i, train.y[i]) = 1.0;

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        MatD pre = (train.x * w1).rowwise() + b1.transpose();
        MatD h = pre.cwiseMax(0.0);
        MatD logits = (h * w2).rowwise() + b2.transpose();
        MatD p(n, cls);
        for (int i = 0; i < n; ++i) {
            const double mx = logits.row(i).maxCoeff();
            double sum = 0;
            for (int c = 0; c < cls; ++c) {
                p(i, c) = std::exp(logits(i, c) - mx);
                sum += p(i, c);
            }
            p.row(i) /= sum;
        }
        MatD dlogits = (p - onehot) / static_cast<double>(n);
        MatD dw2 = h.transpose() * dlogits;
        VecD db2 = dlogits.colwise().sum();
        MatD dh = dlogits * w2.transpose();
        MatD dpre = (pre.array() > 0.0).select(dh, 0.0);
        MatD dw1 = train.x.transpose() * dpre;
        VecD db1 = dpre.colwise().sum();
        w1 -= spec.lr * dw1;
        b1 -= spec.lr * db1;
        w2 -= spec.lr * dw2;
        b2 -= spec.lr * db2;
    }

    // calibration on the training split
    MatD pre = (train.x * w1).rowwise() + b1.transpose();
    MatD h = pre.cwiseMax(0.0);
    VecD flat_x(train.x.size()), flat_h(h.size());
    for (long i = 0; i < train.x.size(); ++i) flat_x[i] = train.x(i / dim, i % dim);
    for (long i = 0; i < h.size(); ++i) flat_h[i] = h(i / hid, i % hid);

    Model model;
    model.name = "mlp_fixture";
    model.input_shape = {dim};
    LayerNode fc1;
    fc1.name = "fc1";
    fc1.kind = LayerKind::Linear;
    fc1.in_features = dim;
    fc1.out_features = hid;
    fc1.weights = w1;
    fc1.bias = b1;
    fc1.w_range = w1.cwiseAbs().maxCoeff();
    fc1.in_range = percentile_range({flat_x}, true);
    fc1.in_signed = true;
    LayerNode act1;
    act1.name = "act1";
    act1.kind = LayerKind::ReLU;
    LayerNode fc2;
    fc2.name = "fc2";
    fc2.kind = LayerKind::Linear;
    fc2.in_features = hid;
    fc2.out_features = cls;
    fc2.weights = w2;
    fc2.bias = b2;
    fc2.w_range = w2.cwiseAbs().maxCoeff();
    fc2.in_range = percentile_range({flat_h}, false);
    fc2.in_signed = false;
    model.layers = {fc1, act1, fc2};
    model.validate();
    return model;
}

void save_dataset(const Dataset& data, const std::string& dir, const std::string& split) {
    fs::create_directories(dir);
    std::ofstream bin(dir + "/" + split + ".bin", std::ios::binary);
    if (!bin) throw ConfigError("cannot write " + dir + "/" + split + ".bin");
    for (long i = 0; i < data.x.rows(); ++i)
        for (long j = 0; j < data.x.cols(); ++j) {
            const float v = static_cast<float>(data.x(i, j));
            bin.write(reinterpret_cast<const char*>(&v), sizeof(float));
        }
    std::ofstream lab(dir + "/" + split + "_labels.csv");
    lab << "index,label\n";
    for (long i = 0; i < data.y.size(); ++i) lab << i << "," << data.y[i] << "\n";
}

Dataset load_dataset(const std::string& dir, const std::string& split) {
    CsvTable t = read_csv(dir + "/" + split + "_labels.csv");
    const int ci = t.col("label");
    const long n = static_cast<long>(t.rows.size());
    if (n == 0) throw ConfigError(dir + ": empty " + split + " label file");

    std::ifstream bin(dir + "/" + split + ".bin", std::ios::binary | std::ios::ate);
    if (!bin) throw ConfigError("cannot read " + dir + "/" + split + ".bin");
    const long bytes = static_cast<long>(bin.tellg());
    if (bytes % (n * static_cast<long>(sizeof(float))) != 0)
        throw ConfigError(dir + "/" + split + ".bin does not hold a whole number of samples");
    const long dim = bytes / static_cast<long>(sizeof(float)) / n;
    bin.seekg(0);

    Dataset d;
    d.x.resize(n, dim);
    d.y.resize(n);
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < dim; ++j) {
            float v;
            bin.read(reinterpret_cast<char*>(&v), sizeof(float));
            d.x(i, j) = static_cast<double>(v);
        }
        d.y[i] = std::stol(t.rows[i][ci]);
    }
    return d;
}

void gen_fixture(const std::string& dir, const FixtureSpec& spec) {
    Dataset train = make_blobs(spec, spec.train_n, 1);
    Dataset eval = make_blobs(spec, spec.eval_n, 2);
    Model model = train_fixture(spec, train);
    save_model(model, dir);
    save_dataset(train, dir, "train");
    save_dataset(eval, dir, "eval");
}

}  // namespace cimsim
