#include "aadv/classifier.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

// Binary container, little-endian: magic "AADV", version u32, kind u8
// (1 = model, 2 = dataset), then the payload described in classifier.hpp.

namespace aadv {

namespace {

constexpr char kMagic[4] = {'A', 'A', 'D', 'V'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kKindModel = 1;
constexpr std::uint8_t kKindDataset = 2;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw FormatError("cannot open for writing: " + path);
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }
    void tensor_data(const Tensor& t) { bytes(t.data(), t.numel() * 8); }
    void close(const std::string& path) {
        out_.close();
        if (!out_) throw FormatError("write failed: " + path);
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw FormatError("cannot open: " + path);
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError(path_ + ": truncated at offset " + std::to_string(offset_));
        offset_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, 8);
        return v;
    }
    void fill(Tensor& t) { bytes(t.data(), t.numel() * 8); }
    std::size_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
    std::size_t offset_ = 0;
};

void write_header(Writer& w, std::uint8_t kind) {
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u8(kind);
}

void read_header(Reader& r, std::uint8_t want_kind) {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(r.path() + ": bad magic at offset 0");
    const std::uint32_t ver = r.u32();
    if (ver != kVersion)
        throw FormatError(r.path() + ": unsupported version " + std::to_string(ver) +
                          " at offset 4");
    const std::uint8_t kind = r.u8();
    if (kind != want_kind)
        throw FormatError(r.path() + ": wrong container kind " + std::to_string(kind) +
                          " at offset 8");
}

} // namespace

void save_model(const ClassifierModel& model, const std::string& path) {
    Writer w(path);
    write_header(w, kKindModel);
    w.u32(static_cast<std::uint32_t>(model.width));
    w.u32(static_cast<std::uint32_t>(model.height));
    w.u32(static_cast<std::uint32_t>(model.channels));
    w.u32(static_cast<std::uint32_t>(model.classes));
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    for (const Layer& layer : model.layers) {
        w.u8(static_cast<std::uint8_t>(layer.kind));
        switch (layer.kind) {
        case LayerKind::Relu:
            break;
        case LayerKind::Dense:
            w.u32(static_cast<std::uint32_t>(layer.weights.dim(0)));
            w.u32(static_cast<std::uint32_t>(layer.weights.dim(1)));
            w.tensor_data(layer.weights);
            w.tensor_data(layer.bias);
            break;
        case LayerKind::Conv:
            w.u32(static_cast<std::uint32_t>(layer.weights.dim(0)));
            w.u32(static_cast<std::uint32_t>(layer.weights.dim(2)));
            w.u32(static_cast<std::uint32_t>(layer.weights.dim(3)));
            w.u32(static_cast<std::uint32_t>(layer.stride));
            w.u32(static_cast<std::uint32_t>(layer.pad));
            w.tensor_data(layer.weights);
            w.tensor_data(layer.bias);
            break;
        }
    }
    w.close(path);
}

ClassifierModel load_model(const std::string& path) {
    Reader r(path);
    read_header(r, kKindModel);
    ClassifierModel m;
    m.width = r.u32();
    m.height = r.u32();
    m.channels = r.u32();
    m.classes = r.u32();
    const std::uint32_t nlayers = r.u32();
    for (std::uint32_t i = 0; i < nlayers; ++i) {
        const std::uint8_t kind = r.u8();
        Layer layer;
        switch (kind) {
        case 3:
            layer.kind = LayerKind::Relu;
            break;
        case 1: {
            layer.kind = LayerKind::Dense;
            const std::size_t in = r.u32(), out = r.u32();
            layer.weights = Tensor({in, out});
            layer.bias = Tensor({out});
            r.fill(layer.weights);
            r.fill(layer.bias);
            break;
        }
        case 2: {
            layer.kind = LayerKind::Conv;
            const std::size_t k = r.u32(), cin = r.u32(), cout = r.u32();
            layer.stride = static_cast<int>(r.u32());
            layer.pad = static_cast<int>(r.u32());
            layer.weights = Tensor({k, k, cin, cout});
            layer.bias = Tensor({cout});
            r.fill(layer.weights);
            r.fill(layer.bias);
            break;
        }
        default:
            throw FormatError(path + ": unknown layer kind " + std::to_string(kind) +
                              " at offset " + std::to_string(r.offset() - 1));
        }
        m.layers.push_back(std::move(layer));
    }
    return m;
}

void save_dataset(const Dataset& data, const std::string& path) {
    Writer w(path);
    write_header(w, kKindDataset);
    w.u32(static_cast<std::uint32_t>(data.width));
    w.u32(static_cast<std::uint32_t>(data.height));
    w.u32(static_cast<std::uint32_t>(data.channels));
    w.u32(static_cast<std::uint32_t>(data.classes));
    w.u32(static_cast<std::uint32_t>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        w.u8(static_cast<std::uint8_t>(data.labels[i]));
        w.u8(data.is_val[i]);
        w.tensor_data(data.images[i]);
    }
    w.close(path);
}

Dataset load_dataset(const std::string& path) {
    Reader r(path);
    read_header(r, kKindDataset);
    Dataset d;
    d.width = r.u32();
    d.height = r.u32();
    d.channels = r.u32();
    d.classes = r.u32();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const int label = r.u8();
        if (label < 0 || static_cast<std::size_t>(label) >= d.classes)
            throw FormatError(path + ": label out of range at offset " +
                              std::to_string(r.offset() - 1));
        d.labels.push_back(label);
        d.is_val.push_back(r.u8());
        Tensor img({d.height, d.width, d.channels});
        r.fill(img);
        d.images.push_back(std::move(img));
    }
    return d;
}

} // namespace aadv
