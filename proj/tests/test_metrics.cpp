#include <doctest.h>

#include "aadv/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

using namespace aadv;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    const fs::path d = fs::temp_directory_path() / "aadv_test_metrics";
    fs::create_directories(d);
    return d;
}

RunReport sample_report() {
    RunReport rep;
    rep.config = {{"seed", "1"}, {"eps", "16/255"}, {"note", "line1\nline2"}};
    ImageRecord r;
    r.id = 4;
    r.target = 2;
    r.success = true;
    r.l0 = 12;
    r.l1 = 0.71;
    r.l2 = 0.21;
    r.linf = 0.0627;
    r.pixfrac = 4.69;
    r.iters = 500;
    r.seconds = 0.731;
    rep.images.push_back(r);
    r.id = 9;
    r.success = false;
    r.l0 = 256;
    r.seconds = 0.52;
    rep.images.push_back(r);
    rep.finalize();
    return rep;
}

} // namespace

TEST_CASE("norms of a mixed vector") {
    const Norms n = norms(Tensor({3}, {0.0, 0.5, -0.2}));
    CHECK(n.l0 == 2.0);
    CHECK(n.l1 == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(n.l2 == doctest::Approx(std::sqrt(0.29)).epsilon(1e-12));
    CHECK(n.linf == 0.5);

    const Norms z = norms(Tensor({4}));
    CHECK(z.l0 == 0.0);
    CHECK(z.l1 == 0.0);
    CHECK(z.l2 == 0.0);
    CHECK(z.linf == 0.0);
}

TEST_CASE("pixel fraction reference values") {
    CHECK(pixel_fraction(320.1, 3072) == 10.42);
    CHECK(pixel_fraction(131.3, 3072) == 4.27);
    CHECK(pixel_fraction(5591.5, 268203) == 2.08);
    CHECK(pixel_fraction(0.0, 100) == 0.0);
    CHECK(pixel_fraction(100.0, 100) == 100.0);
    CHECK_THROWS(pixel_fraction(1.0, 0));
}

TEST_CASE("aggregates over an empty run have a null asr") {
    const Aggregates a = compute_aggregates({});
    CHECK(a.attempted == 0);
    CHECK_FALSE(a.asr.has_value());
    CHECK(a.mean_l0 == 0.0);
}

TEST_CASE("aggregates recompute exactly from the rows") {
    const RunReport rep = sample_report();
    REQUIRE(rep.agg.asr.has_value());
    CHECK(*rep.agg.asr == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(rep.agg.attempted == 2);
    CHECK(rep.agg.successes == 1);
    CHECK(rep.agg.mean_l0 == doctest::Approx((12.0 + 256.0) / 2.0).epsilon(1e-12));
    CHECK(rep.agg.succ_mean_l0 == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(rep.agg.mean_seconds == doctest::Approx((0.731 + 0.52) / 2.0).epsilon(1e-12));
}

TEST_CASE("report text round trip is byte-identical") {
    const RunReport rep = sample_report();
    const std::string text = report_to_text(rep);
    const RunReport back = report_from_text(text);
    CHECK(report_to_text(back) == text);
    // embedded newline in a config value survives
    CHECK(back.config[2].second == "line1\nline2");
    REQUIRE(back.images.size() == 2);
    CHECK(back.images[0].l1 == rep.images[0].l1);
    CHECK(back.images[1].success == false);
}

TEST_CASE("report file round trip through emit/load") {
    const RunReport rep = sample_report();
    const fs::path p = tmp_dir() / "r.txt";
    emit_report(rep, p.string());
    const RunReport back = load_report(p.string());
    CHECK(report_to_text(back) == report_to_text(rep));
    CHECK_THROWS_AS(load_report((tmp_dir() / "absent.txt").string()), FormatError);
}

TEST_CASE("malformed report text is rejected") {
    CHECK_THROWS_AS(report_from_text("not a report\n"), FormatError);
    CHECK_THROWS_AS(report_from_text("aadv-report v1\n[config]\n"), FormatError); // no [end]
    CHECK_THROWS_AS(report_from_text("aadv-report v1\nstray\n[end]\n"), FormatError);
    CHECK_THROWS_AS(
        report_from_text("aadv-report v1\n[aggregate]\nbogus_key=1\n[end]\n"), FormatError);
    CHECK_THROWS_AS(
        report_from_text("aadv-report v1\n[aggregate]\nmean_l0=abc\n[end]\n"), FormatError);
}

TEST_CASE("timing mask hides every seconds field and nothing else") {
    const std::string text = report_to_text(sample_report());
    const std::string masked = mask_timing_fields(text);
    CHECK(masked.find("seconds=0.731") == std::string::npos);
    CHECK(masked.find("seconds=-") != std::string::npos);
    CHECK(masked.find("l1=") != std::string::npos);
    // masking identical reports produces identical text
    CHECK(mask_timing_fields(text) == masked);
}

TEST_CASE("image dump writes readable pnm files with expected extremes") {
    const std::size_t h = 4, w = 4;
    Tensor x({h, w, 1}), mask({h, w, 1});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i) / 15.0;
    Tensor x_adv = x;
    x_adv[5] = std::min(1.0, x[5] + 0.25);
    mask[5] = 1.0;
    const std::string prefix = (tmp_dir() / "img").string();
    dump_images(x, x_adv, mask, prefix);

    const Tensor orig = read_pnm(prefix + "_orig.pgm");
    REQUIRE(orig.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(std::fabs(orig[i] - x[i]) <= 0.5 / 255.0 + 1e-12); // 8-bit quantization

    const Tensor m = read_pnm(prefix + "_mask.pgm");
    CHECK(m[5] == 1.0);
    CHECK(m[0] == 0.0);

    // the single changed pixel is stretched to full white in the diff image
    const Tensor diff = read_pnm(prefix + "_diff.pgm");
    CHECK(diff[5] == 1.0);
    CHECK(diff[0] == 0.0);

    // identical images produce an all-black diff
    dump_images(x, x, mask, (tmp_dir() / "same").string());
    const Tensor black = read_pnm((tmp_dir() / "same_diff.pgm").string());
    for (std::size_t i = 0; i < black.numel(); ++i) CHECK(black[i] == 0.0);
}

TEST_CASE("pnm reader rejects truncated and alien files") {
    const fs::path p = tmp_dir() / "trunc.pgm";
    std::ofstream(p, std::ios::binary) << "P5\n4 4\n255\nab"; // 2 of 16 bytes
    CHECK_THROWS_AS(read_pnm(p.string()), FormatError);
    const fs::path q = tmp_dir() / "alien.pgm";
    std::ofstream(q, std::ios::binary) << "P3\n4 4\n255\n";
    CHECK_THROWS_AS(read_pnm(q.string()), FormatError);
}

TEST_CASE("three-channel dumps use ppm") {
    Tensor x({2, 2, 3});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = 0.5;
    const std::string prefix = (tmp_dir() / "rgb").string();
    dump_images(x, x, Tensor({2, 2, 3}), prefix);
    const Tensor back = read_pnm(prefix + "_orig.ppm");
    CHECK(back.shape() == std::vector<std::size_t>{2, 2, 3});
}
