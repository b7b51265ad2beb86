#include "aadv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace aadv {

Norms norms(const Tensor& v) {
    Norms out;
    for (std::size_t i = 0; i < v.numel(); ++i) {
        const double a = std::fabs(v[i]);
        if (a > 1e-12) out.l0 += 1.0;
        out.l1 += a;
        out.l2 += a * a;
        out.linf = std::max(out.linf, a);
    }
    out.l2 = std::sqrt(out.l2);
    return out;
}

double pixel_fraction(double l0, std::size_t n) {
    if (n == 0) throw std::invalid_argument("pixel_fraction: N must be positive");
    return std::round(10000.0 * l0 / static_cast<double>(n)) / 100.0;
}

Aggregates compute_aggregates(const std::vector<ImageRecord>& images) {
    Aggregates a;
    a.attempted = images.size();
    double sl0 = 0, sl1 = 0, sl2 = 0, slinf = 0, spf = 0, ssec = 0;
    double ss_l0 = 0, ss_l2 = 0;
    for (const ImageRecord& rec : images) {
        if (rec.success) {
            ++a.successes;
            ss_l0 += rec.l0;
            ss_l2 += rec.l2;
        }
        sl0 += rec.l0;
        sl1 += rec.l1;
        sl2 += rec.l2;
        slinf += rec.linf;
        spf += rec.pixfrac;
        ssec += rec.seconds;
    }
    if (a.attempted > 0) {
        const double n = static_cast<double>(a.attempted);
        a.asr = 100.0 * static_cast<double>(a.successes) / n;
        a.mean_l0 = sl0 / n;
        a.mean_l1 = sl1 / n;
        a.mean_l2 = sl2 / n;
        a.mean_linf = slinf / n;
        a.mean_pixfrac = spf / n;
        a.mean_seconds = ssec / n;
    }
    if (a.successes > 0) {
        a.succ_mean_l0 = ss_l0 / static_cast<double>(a.successes);
        a.succ_mean_l2 = ss_l2 / static_cast<double>(a.successes);
    }
    return a;
}

void RunReport::finalize() { agg = compute_aggregates(images); }

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& ctx) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError("report: bad number '" + s + "' in " + ctx);
    }
}

// key=value on one line; config values are backslash-escaped so embedded
// newlines survive the round trip
std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '\\')
            out += "\\\\";
        else if (c == '\n')
            out += "\\n";
        else
            out += c;
    }
    return out;
}

std::string unescape(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            ++i;
            out += (s[i] == 'n') ? '\n' : s[i];
        } else {
            out += s[i];
        }
    }
    return out;
}

} // namespace

std::string report_to_text(const RunReport& report) {
    std::ostringstream out;
    out << "aadv-report v1\n";
    out << "[config]\n";
    for (const auto& [k, v] : report.config) out << k << "=" << escape(v) << "\n";
    out << "[images]\n";
    for (const ImageRecord& r : report.images) {
        out << "id=" << r.id << " target=" << r.target << " success=" << (r.success ? 1 : 0)
            << " l0=" << fmt(r.l0) << " l1=" << fmt(r.l1) << " l2=" << fmt(r.l2)
            << " linf=" << fmt(r.linf) << " pixfrac=" << fmt(r.pixfrac)
            << " iters=" << r.iters << " seconds=" << fmt(r.seconds) << "\n";
    }
    const Aggregates& a = report.agg;
    out << "[aggregate]\n";
    out << "attempted=" << a.attempted << "\n";
    out << "successes=" << a.successes << "\n";
    out << "asr=" << (a.asr ? fmt(*a.asr) : std::string("null")) << "\n";
    out << "mean_l0=" << fmt(a.mean_l0) << "\n";
    out << "mean_l1=" << fmt(a.mean_l1) << "\n";
    out << "mean_l2=" << fmt(a.mean_l2) << "\n";
    out << "mean_linf=" << fmt(a.mean_linf) << "\n";
    out << "mean_pixfrac=" << fmt(a.mean_pixfrac) << "\n";
    out << "mean_seconds=" << fmt(a.mean_seconds) << "\n";
    out << "succ_mean_l0=" << fmt(a.succ_mean_l0) << "\n";
    out << "succ_mean_l2=" << fmt(a.succ_mean_l2) << "\n";
    out << "[end]\n";
    return out.str();
}

RunReport report_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "aadv-report v1")
        throw FormatError("report: missing/unsupported header: '" + line + "'");
    RunReport rep;
    enum { None, Config, Images, Aggregate, Done } section = None;
    auto split_kv = [](const std::string& s) {
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) throw FormatError("report: expected key=value: '" + s + "'");
        return std::pair<std::string, std::string>{s.substr(0, eq), s.substr(eq + 1)};
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line == "[config]") { section = Config; continue; }
        if (line == "[images]") { section = Images; continue; }
        if (line == "[aggregate]") { section = Aggregate; continue; }
        if (line == "[end]") { section = Done; continue; }
        switch (section) {
        case Config: {
            auto [k, v] = split_kv(line);
            rep.config.emplace_back(k, unescape(v));
            break;
        }
        case Images: {
            ImageRecord r;
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) {
                auto [k, v] = split_kv(tok);
                if (k == "id") r.id = static_cast<int>(parse_double(v, "id"));
                else if (k == "target") r.target = static_cast<int>(parse_double(v, "target"));
                else if (k == "success") r.success = v == "1";
                else if (k == "l0") r.l0 = parse_double(v, "l0");
                else if (k == "l1") r.l1 = parse_double(v, "l1");
                else if (k == "l2") r.l2 = parse_double(v, "l2");
                else if (k == "linf") r.linf = parse_double(v, "linf");
                else if (k == "pixfrac") r.pixfrac = parse_double(v, "pixfrac");
                else if (k == "iters") r.iters = static_cast<int>(parse_double(v, "iters"));
                else if (k == "seconds") r.seconds = parse_double(v, "seconds");
                else throw FormatError("report: unknown image field '" + k + "'");
            }
            rep.images.push_back(r);
            break;
        }
        case Aggregate: {
            auto [k, v] = split_kv(line);
            Aggregates& a = rep.agg;
            if (k == "attempted") a.attempted = static_cast<std::size_t>(parse_double(v, k));
            else if (k == "successes") a.successes = static_cast<std::size_t>(parse_double(v, k));
            else if (k == "asr") a.asr = (v == "null") ? std::nullopt : std::optional<double>(parse_double(v, k));
            else if (k == "mean_l0") a.mean_l0 = parse_double(v, k);
            else if (k == "mean_l1") a.mean_l1 = parse_double(v, k);
            else if (k == "mean_l2") a.mean_l2 = parse_double(v, k);
            else if (k == "mean_linf") a.mean_linf = parse_double(v, k);
            else if (k == "mean_pixfrac") a.mean_pixfrac = parse_double(v, k);
            else if (k == "mean_seconds") a.mean_seconds = parse_double(v, k);
            else if (k == "succ_mean_l0") a.succ_mean_l0 = parse_double(v, k);
            else if (k == "succ_mean_l2") a.succ_mean_l2 = parse_double(v, k);
            else throw FormatError("report: unknown aggregate field '" + k + "'");
            break;
        }
        case None:
        case Done:
            throw FormatError("report: stray line outside sections: '" + line + "'");
        }
    }
    if (section != Done) throw FormatError("report: missing [end] marker");
    return rep;
}

void emit_report(const RunReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << report_to_text(report);
    if (!out) throw FormatError("write failed: " + path);
}

RunReport load_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return report_from_text(ss.str());
}

std::string mask_timing_fields(const std::string& report_text) {
    std::istringstream in(report_text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t pos = line.find("seconds=");
        if (pos != std::string::npos) {
            std::size_t end = line.find(' ', pos);
            if (end == std::string::npos) end = line.size();
            line = line.substr(0, pos) + "seconds=-" + line.substr(end);
        }
        out << line << "\n";
    }
    return out.str();
}

namespace {

unsigned char quantize(double v) {
    return static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

void write_pnm(const Tensor& img, const std::string& path) {
    const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (c != 1 && c != 3) throw DimensionError("write_pnm: channels must be 1 or 3");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(w * c);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t i = 0; i < w * c; ++i) row[i] = quantize(img[y * w * c + i]);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw FormatError("write failed: " + path);
}

} // namespace

void dump_images(const Tensor& x, const Tensor& x_adv, const Tensor& mask,
                 const std::string& prefix) {
    require_same_shape(x, x_adv, "dump_images");
    require_same_shape(x, mask, "dump_images");
    const std::string ext = x.dim(2) == 1 ? ".pgm" : ".ppm";
    write_pnm(x, prefix + "_orig" + ext);
    write_pnm(x_adv, prefix + "_adv" + ext);
    Tensor diff(x.shape());
    double peak = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        diff[i] = std::fabs(x_adv[i] - x[i]);
        peak = std::max(peak, diff[i]);
    }
    if (peak > 0.0)
        for (std::size_t i = 0; i < diff.numel(); ++i) diff[i] /= peak;
    write_pnm(diff, prefix + "_diff" + ext);
    write_pnm(mask, prefix + "_mask" + ext);
}

Tensor read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if ((magic != "P5" && magic != "P6") || maxval != 255 || w == 0 || h == 0)
        throw FormatError(path + ": unsupported pnm header");
    in.get(); // single whitespace byte after maxval
    const std::size_t c = magic == "P5" ? 1 : 3;
    std::vector<unsigned char> raw(w * h * c);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw FormatError(path + ": truncated pixel data");
    Tensor img({h, w, c});
    for (std::size_t i = 0; i < raw.size(); ++i) img[i] = static_cast<double>(raw[i]) / 255.0;
    return img;
}

} // namespace aadv
