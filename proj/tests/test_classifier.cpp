#include <doctest.h>

#include "aadv/classifier.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace aadv;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    const fs::path d = fs::temp_directory_path() / "aadv_test_classifier";
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("argmax breaks ties toward the lowest index") {
    CHECK(argmax_lowest(Tensor({3}, {0.1, 3.0, -1.0})) == 1);
    CHECK(argmax_lowest(Tensor({4}, {2.0, 2.0, 2.0, 2.0})) == 0);
    CHECK(argmax_lowest(Tensor({3}, {-5.0, -5.0, -6.0})) == 0);
    CHECK(argmax_lowest(Tensor({1}, {7.0})) == 0);
}

TEST_CASE("synthetic dataset is deterministic, balanced, and in range") {
    const Dataset a = generate_synthetic(9, 100, 8, 8, 1, 10);
    const Dataset b = generate_synthetic(9, 100, 8, 8, 1, 10);
    REQUIRE(a.size() == 100);
    CHECK(a.classes == 10);
    std::vector<int> counts(10, 0);
    std::size_t val = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.labels[i] == static_cast<int>(i % 10));
        ++counts[static_cast<std::size_t>(a.labels[i])];
        val += a.is_val[i];
        for (std::size_t j = 0; j < a.images[i].numel(); ++j) {
            CHECK(a.images[i][j] >= 0.0);
            CHECK(a.images[i][j] <= 1.0);
        }
        CHECK(std::memcmp(a.images[i].data(), b.images[i].data(),
                          a.images[i].numel() * sizeof(double)) == 0);
    }
    for (int c : counts) CHECK(c == 10);
    CHECK(val == 20); // 1 in 5 samples tagged validation
    const Dataset c = generate_synthetic(10, 100, 8, 8, 1, 10);
    CHECK(std::memcmp(a.images[0].data(), c.images[0].data(),
                      a.images[0].numel() * sizeof(double)) != 0);
}

TEST_CASE("model constructors are seed-deterministic with expected structure") {
    const ClassifierModel lin = make_linear_model(3, 3, 1, 2, 5);
    REQUIRE(lin.layers.size() == 1);
    CHECK(lin.layers[0].kind == LayerKind::Dense);
    CHECK(lin.layers[0].weights.shape() == std::vector<std::size_t>{9, 2});
    CHECK(lin.layers[0].bias.shape() == std::vector<std::size_t>{2});
    CHECK(lin.param_checksum() == make_linear_model(3, 3, 1, 2, 5).param_checksum());
    CHECK(lin.param_checksum() != make_linear_model(3, 3, 1, 2, 6).param_checksum());

    const ClassifierModel conv = make_conv_model(16, 16, 1, 10, 5);
    REQUIRE(conv.layers.size() == 5);
    CHECK(conv.layers[0].kind == LayerKind::Conv);
    CHECK(conv.layers[0].weights.shape() == std::vector<std::size_t>{3, 3, 1, 8});
    CHECK(conv.layers[1].kind == LayerKind::Relu);
    CHECK(conv.layers[2].kind == LayerKind::Conv);
    CHECK(conv.layers[2].weights.shape() == std::vector<std::size_t>{3, 3, 8, 16});
    CHECK(conv.layers[3].kind == LayerKind::Relu);
    CHECK(conv.layers[4].kind == LayerKind::Dense);
    CHECK(conv.layers[4].weights.dim(1) == 10);
}

TEST_CASE("predict_class agrees with argmax of predict_logits") {
    const ClassifierModel m = make_conv_model(8, 8, 1, 4, 21);
    const Dataset d = generate_synthetic(21, 8, 8, 8, 1, 4);
    for (const Tensor& img : d.images) {
        const Tensor logits = m.predict_logits(img);
        REQUIRE(logits.numel() == 4);
        CHECK(m.predict_class(img) == argmax_lowest(logits));
    }
}

TEST_CASE("training with zero epochs leaves parameters untouched") {
    ClassifierModel m = make_linear_model(8, 8, 1, 2, 33);
    const std::uint64_t before = m.param_checksum();
    const Dataset d = generate_synthetic(33, 20, 8, 8, 1, 2);
    TrainOptions opt;
    opt.epochs = 0;
    const TrainHistory hist = train(m, d, opt);
    CHECK(hist.train_acc.empty());
    CHECK(m.param_checksum() == before);
}

TEST_CASE("a linear model memorizes a small dataset") {
    ClassifierModel m = make_linear_model(8, 8, 1, 2, 33);
    const Dataset d = generate_synthetic(33, 20, 8, 8, 1, 2);
    TrainOptions opt;
    opt.epochs = 60;
    opt.batch_size = 4;
    opt.lr = 0.02;
    opt.seed = 33;
    const TrainHistory hist = train(m, d, opt);
    REQUIRE(hist.train_acc.size() == 60);
    CHECK(hist.train_acc.back() >= 0.95);
    CHECK(accuracy(m, d, /*val_only=*/false) >= 0.95);
}

TEST_CASE("accuracy matches a manual count") {
    const ClassifierModel m = make_linear_model(8, 8, 1, 3, 2);
    const Dataset d = generate_synthetic(2, 15, 8, 8, 1, 3);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (m.predict_class(d.images[i]) == d.labels[i]) ++hits;
    CHECK(accuracy(m, d, false) ==
          doctest::Approx(static_cast<double>(hits) / 15.0).epsilon(1e-12));
}

TEST_CASE("model save/load round trip is byte-identical") {
    ClassifierModel m = make_conv_model(8, 8, 1, 4, 77);
    const fs::path p1 = tmp_dir() / "m1.aadv", p2 = tmp_dir() / "m2.aadv";
    save_model(m, p1.string());
    const ClassifierModel loaded = load_model(p1.string());
    CHECK(loaded.param_checksum() == m.param_checksum());
    CHECK(loaded.width == m.width);
    CHECK(loaded.classes == m.classes);
    save_model(loaded, p2.string());
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("dataset save/load round trip preserves everything") {
    const Dataset d = generate_synthetic(4, 12, 8, 8, 1, 3);
    const fs::path p = tmp_dir() / "d.aadv";
    save_dataset(d, p.string());
    const Dataset back = load_dataset(p.string());
    REQUIRE(back.size() == d.size());
    CHECK(back.labels == d.labels);
    CHECK(back.is_val == d.is_val);
    for (std::size_t i = 0; i < d.size(); ++i)
        CHECK(std::memcmp(back.images[i].data(), d.images[i].data(),
                          d.images[i].numel() * sizeof(double)) == 0);
}

TEST_CASE("truncated and corrupt model files are rejected") {
    ClassifierModel m = make_linear_model(4, 4, 1, 2, 1);
    const fs::path full = tmp_dir() / "full.aadv";
    save_model(m, full.string());
    const std::string bytes = slurp(full);
    REQUIRE(bytes.size() > 16);

    const fs::path cut = tmp_dir() / "cut.aadv";
    std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_model(cut.string()), FormatError);

    const fs::path bad = tmp_dir() / "bad.aadv";
    std::string mangled = bytes;
    mangled[0] = 'X'; // breaks the magic
    std::ofstream(bad, std::ios::binary) << mangled;
    CHECK_THROWS_AS(load_model(bad.string()), FormatError);

    CHECK_THROWS_AS(load_model((tmp_dir() / "missing.aadv").string()), FormatError);
}

TEST_CASE("forward exposes parameter node ids in layer order") {
    const ClassifierModel m = make_conv_model(8, 8, 1, 4, 9);
    ad::Graph g;
    std::vector<std::pair<int, int>> pids;
    const int logits = m.forward(g, g.input(Tensor({8, 8, 1})), &pids);
    CHECK(g.value(logits).numel() == 4);
    REQUIRE(pids.size() == 3); // conv, conv, dense
    for (const auto& [w, b] : pids) {
        CHECK(w >= 0);
        CHECK(b >= 0);
    }
}
