#include "pertfool/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace pertfool::io {

namespace fs = std::filesystem;
using FK = FormatError::Kind;

namespace {

// ---------------------------------------------------------------------------
// Little-endian primitives (files are written LE regardless of host order)
// ---------------------------------------------------------------------------

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw Error("write failed");
}

void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw FormatError(FK::truncated, std::string(what) + ": unexpected end of file");
}

void write_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    write_bytes(os, b, 4);
}

std::uint32_t read_u32le(std::istream& is, const char* what) {
    unsigned char b[4];
    read_bytes(is, b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64le(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    write_bytes(os, b, 8);
}

double read_f64le(std::istream& is, const char* what) {
    unsigned char b[8];
    read_bytes(is, b, 8, what);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

void write_f64_array(std::ostream& os, const std::vector<double>& v) {
    for (double x : v) write_f64le(os, x);
}

void read_f64_array(std::istream& is, std::vector<double>& v, const char* what) {
    for (double& x : v) x = read_f64le(is, what);
}

void expect_magic(std::istream& is, const char magic[4], const char* what) {
    char got[4];
    read_bytes(is, got, 4, what);
    if (std::memcmp(got, magic, 4) != 0)
        throw FormatError(FK::bad_magic, std::string(what) + ": bad magic");
}

void expect_version(std::istream& is, std::uint32_t want, const char* what) {
    std::uint32_t got = read_u32le(is, what);
    if (got != want)
        throw FormatError(FK::bad_version, std::string(what) + ": unsupported version " +
                                               std::to_string(got));
}

void expect_eof(std::istream& is, const char* what) {
    if (is.peek() != std::char_traits<char>::eof())
        throw FormatError(FK::malformed_header,
                          std::string(what) + ": trailing bytes after payload");
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + path.string());
    return os;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open: " + path.string());
    return is;
}

}  // namespace

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_u32be(std::istream& is, const char* what) {
    unsigned char b[4];
    read_bytes(is, b, 4, what);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_u32be(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    write_bytes(os, b, 4);
}

struct IdxPayload {
    std::vector<std::uint32_t> dims;
    std::vector<unsigned char> bytes;
};

IdxPayload read_idx_ubyte(const fs::path& path, const char* what) {
    auto is = open_in(path);
    unsigned char head[4];
    read_bytes(is, head, 4, what);
    if (head[0] != 0 || head[1] != 0)
        throw FormatError(FK::malformed_header, std::string(what) + ": bad IDX magic bytes");
    if (head[2] != 0x08)
        throw FormatError(FK::malformed_header,
                          std::string(what) + ": unsupported IDX type code (only 0x08)");
    const unsigned rank = head[3];
    if (rank == 0 || rank > 4)
        throw FormatError(FK::malformed_header, std::string(what) + ": bad IDX rank");
    IdxPayload out;
    std::size_t total = 1;
    for (unsigned i = 0; i < rank; ++i) {
        out.dims.push_back(read_u32be(is, what));
        total *= out.dims.back();
    }
    out.bytes.resize(total);
    read_bytes(is, out.bytes.data(), total, what);
    expect_eof(is, what);
    return out;
}

}  // namespace

LabeledDataset load_idx(const fs::path& images_path, const fs::path& labels_path, Split split) {
    IdxPayload images = read_idx_ubyte(images_path, "idx images");
    IdxPayload labels = read_idx_ubyte(labels_path, "idx labels");
    if (labels.dims.size() != 1)
        throw FormatError(FK::malformed_header, "idx labels: expected rank 1");
    if (images.dims.size() != 3 && images.dims.size() != 4)
        throw FormatError(FK::malformed_header, "idx images: expected rank 3 or 4");
    if (images.dims[0] != labels.dims[0])
        throw FormatError(FK::count_mismatch, "idx: image and label counts differ");

    const std::size_t n = images.dims[0];
    const std::size_t h = images.dims[1];
    const std::size_t w = images.dims[2];
    const std::size_t c = images.dims.size() == 4 ? images.dims[3] : 1;

    LabeledDataset data;
    data.split = split;
    data.samples.resize(n);
    const std::size_t stride = h * w * c;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor img({h, w, c});
        for (std::size_t k = 0; k < stride; ++k)
            img.data[k] = static_cast<double>(images.bytes[i * stride + k]);
        data.samples[i].image = std::move(img);
        data.samples[i].label = static_cast<int>(labels.bytes[i]);
    }
    return data;
}

void save_idx(const fs::path& images_path, const fs::path& labels_path,
              const LabeledDataset& data) {
    if (data.samples.empty()) throw InputError("save_idx: empty dataset");
    const auto& shape = data.samples.front().image.shape;
    {
        auto os = open_out(images_path);
        const bool rank4 = shape[2] != 1;
        unsigned char head[4] = {0, 0, 0x08, static_cast<unsigned char>(rank4 ? 4 : 3)};
        write_bytes(os, head, 4);
        write_u32be(os, static_cast<std::uint32_t>(data.samples.size()));
        write_u32be(os, static_cast<std::uint32_t>(shape[0]));
        write_u32be(os, static_cast<std::uint32_t>(shape[1]));
        if (rank4) write_u32be(os, static_cast<std::uint32_t>(shape[2]));
        std::vector<unsigned char> row(Tensor::numel_of(shape));
        for (const auto& s : data.samples) {
            if (s.image.shape != shape) throw InputError("save_idx: inhomogeneous shapes");
            for (std::size_t k = 0; k < row.size(); ++k) {
                double v = std::clamp(round_half_away(s.image.data[k]), 0.0, 255.0);
                row[k] = static_cast<unsigned char>(v);
            }
            write_bytes(os, row.data(), row.size());
        }
    }
    {
        auto os = open_out(labels_path);
        unsigned char head[4] = {0, 0, 0x08, 1};
        write_bytes(os, head, 4);
        write_u32be(os, static_cast<std::uint32_t>(data.samples.size()));
        for (const auto& s : data.samples) {
            auto b = static_cast<unsigned char>(s.label);
            write_bytes(os, &b, 1);
        }
    }
}

LabeledDataset load_dataset_dir(const fs::path& dir, Split split) {
    const char* prefix = split == Split::train ? "train" : "test";
    fs::path images = dir / (std::string(prefix) + "-images.idx");
    fs::path labels = dir / (std::string(prefix) + "-labels.idx");
    if (fs::exists(images) && fs::exists(labels)) return load_idx(images, labels, split);

    // Per-class subdirectories of portable images: <dir>/<split>/<label>/*.pgm
    fs::path root = dir / prefix;
    if (!fs::is_directory(root))
        throw InputError("dataset directory has neither IDX files nor a '" +
                         std::string(prefix) + "/' class tree: " + dir.string());
    LabeledDataset data;
    data.split = split;
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    for (const auto& cdir : class_dirs) {
        int label;
        try {
            label = std::stoi(cdir.filename().string());
        } catch (const std::exception&) {
            throw InputError("class directory is not a label: " + cdir.string());
        }
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(cdir))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) data.samples.push_back({load_image(f), label});
    }
    if (data.samples.empty()) throw InputError("dataset tree is empty: " + root.string());
    return data;
}

// ---------------------------------------------------------------------------
// PFNN checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kPerturbationVersion = 1;
constexpr std::uint32_t kSamplerVersion = 1;

enum : std::uint8_t {
    kLayerConv = 1,
    kLayerRelu = 2,
    kLayerMaxPool = 3,
    kLayerFlatten = 4,
    kLayerDense = 5,
};

}  // namespace

void save_classifier(const fs::path& path, const Classifier& net) {
    auto os = open_out(path);
    write_bytes(os, "PFNN", 4);
    write_u32le(os, kCheckpointVersion);
    write_u32le(os, static_cast<std::uint32_t>(net.num_classes));
    for (std::size_t d : net.input_shape) write_u32le(os, static_cast<std::uint32_t>(d));
    write_u32le(os, static_cast<std::uint32_t>(net.conv_base_end));
    write_u32le(os, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& layer : net.layers) {
        if (const auto* c = std::get_if<Conv2d>(&layer)) {
            std::uint8_t tag = kLayerConv;
            write_bytes(os, &tag, 1);
            for (std::size_t v : {c->kh, c->kw, c->in_ch, c->out_ch, c->stride, c->pad})
                write_u32le(os, static_cast<std::uint32_t>(v));
            write_f64_array(os, c->weights.data);
            write_f64_array(os, c->bias.data);
        } else if (std::holds_alternative<Relu>(layer)) {
            std::uint8_t tag = kLayerRelu;
            write_bytes(os, &tag, 1);
        } else if (const auto* m = std::get_if<MaxPool2d>(&layer)) {
            std::uint8_t tag = kLayerMaxPool;
            write_bytes(os, &tag, 1);
            write_u32le(os, static_cast<std::uint32_t>(m->k));
            write_u32le(os, static_cast<std::uint32_t>(m->stride));
        } else if (std::holds_alternative<Flatten>(layer)) {
            std::uint8_t tag = kLayerFlatten;
            write_bytes(os, &tag, 1);
        } else if (const auto* d = std::get_if<Dense>(&layer)) {
            std::uint8_t tag = kLayerDense;
            write_bytes(os, &tag, 1);
            write_u32le(os, static_cast<std::uint32_t>(d->in));
            write_u32le(os, static_cast<std::uint32_t>(d->out));
            write_f64_array(os, d->weights.data);
            write_f64_array(os, d->bias.data);
        }
    }
}

Classifier load_classifier(const fs::path& path) {
    auto is = open_in(path);
    expect_magic(is, "PFNN", "checkpoint");
    expect_version(is, kCheckpointVersion, "checkpoint");
    Classifier net;
    net.num_classes = static_cast<int>(read_u32le(is, "checkpoint"));
    for (auto& d : net.input_shape) d = read_u32le(is, "checkpoint");
    net.conv_base_end = read_u32le(is, "checkpoint");
    const std::uint32_t layer_count = read_u32le(is, "checkpoint");
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        std::uint8_t tag;
        read_bytes(is, &tag, 1, "checkpoint");
        switch (tag) {
            case kLayerConv: {
                Conv2d c;
                c.kh = read_u32le(is, "checkpoint");
                c.kw = read_u32le(is, "checkpoint");
                c.in_ch = read_u32le(is, "checkpoint");
                c.out_ch = read_u32le(is, "checkpoint");
                c.stride = read_u32le(is, "checkpoint");
                c.pad = read_u32le(is, "checkpoint");
                c.weights = Tensor({c.kh, c.kw, c.in_ch, c.out_ch});
                c.bias = Tensor({c.out_ch});
                read_f64_array(is, c.weights.data, "checkpoint");
                read_f64_array(is, c.bias.data, "checkpoint");
                net.layers.push_back(std::move(c));
                break;
            }
            case kLayerRelu: net.layers.push_back(Relu{}); break;
            case kLayerMaxPool: {
                MaxPool2d m;
                m.k = read_u32le(is, "checkpoint");
                m.stride = read_u32le(is, "checkpoint");
                net.layers.push_back(m);
                break;
            }
            case kLayerFlatten: net.layers.push_back(Flatten{}); break;
            case kLayerDense: {
                Dense d;
                d.in = read_u32le(is, "checkpoint");
                d.out = read_u32le(is, "checkpoint");
                d.weights = Tensor({d.in, d.out});
                d.bias = Tensor({d.out});
                read_f64_array(is, d.weights.data, "checkpoint");
                read_f64_array(is, d.bias.data, "checkpoint");
                net.layers.push_back(std::move(d));
                break;
            }
            default:
                throw FormatError(FK::malformed_header, "checkpoint: unknown layer tag");
        }
    }
    expect_eof(is, "checkpoint");
    net.validate();
    return net;
}

// ---------------------------------------------------------------------------
// PFPT perturbations
// ---------------------------------------------------------------------------

void save_perturbation(const fs::path& path, const Perturbation& pert) {
    auto os = open_out(path);
    write_bytes(os, "PFPT", 4);
    write_u32le(os, kPerturbationVersion);
    std::uint8_t mode = pert.bound.mode == NormMode::linf ? 0
                        : pert.bound.mode == NormMode::l2 ? 1
                                                          : 2;
    write_bytes(os, &mode, 1);
    write_f64le(os, pert.bound.eta);
    write_u32le(os, static_cast<std::uint32_t>(pert.p.shape.size()));
    for (std::size_t d : pert.p.shape) write_u32le(os, static_cast<std::uint32_t>(d));
    write_f64_array(os, pert.p.data);
}

Perturbation load_perturbation(const fs::path& path) {
    auto is = open_in(path);
    expect_magic(is, "PFPT", "perturbation");
    expect_version(is, kPerturbationVersion, "perturbation");
    Perturbation pert;
    std::uint8_t mode;
    read_bytes(is, &mode, 1, "perturbation");
    if (mode > 2) throw FormatError(FK::malformed_header, "perturbation: bad bound mode");
    pert.bound.mode = mode == 0 ? NormMode::linf : mode == 1 ? NormMode::l2 : NormMode::unbounded;
    pert.bound.eta = read_f64le(is, "perturbation");
    const std::uint32_t rank = read_u32le(is, "perturbation");
    if (rank == 0 || rank > 8)
        throw FormatError(FK::malformed_header, "perturbation: bad rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = read_u32le(is, "perturbation");
    pert.p = Tensor(shape);
    read_f64_array(is, pert.p.data, "perturbation");
    expect_eof(is, "perturbation");
    return pert;
}

// ---------------------------------------------------------------------------
// PFGS Gaussian samplers
// ---------------------------------------------------------------------------

void save_gaussian_sampler(const fs::path& path, const GaussianSampler& sampler) {
    auto os = open_out(path);
    write_bytes(os, "PFGS", 4);
    write_u32le(os, kSamplerVersion);
    for (std::size_t v : {sampler.down_h, sampler.down_w, sampler.channels, sampler.input_h,
                          sampler.input_w})
        write_u32le(os, static_cast<std::uint32_t>(v));
    write_f64le(os, sampler.jitter);
    write_f64_array(os, sampler.mean.data);
    write_f64_array(os, sampler.cov.data);
}

GaussianSampler load_gaussian_sampler(const fs::path& path) {
    auto is = open_in(path);
    expect_magic(is, "PFGS", "sampler");
    expect_version(is, kSamplerVersion, "sampler");
    GaussianSampler s;
    s.down_h = read_u32le(is, "sampler");
    s.down_w = read_u32le(is, "sampler");
    s.channels = read_u32le(is, "sampler");
    s.input_h = read_u32le(is, "sampler");
    s.input_w = read_u32le(is, "sampler");
    s.jitter = read_f64le(is, "sampler");
    const std::size_t n = s.dim();
    s.mean = Tensor({n});
    s.cov = Tensor({n, n});
    read_f64_array(is, s.mean.data, "sampler");
    read_f64_array(is, s.cov.data, "sampler");
    expect_eof(is, "sampler");
    refresh_cholesky(s);
    return s;
}

// ---------------------------------------------------------------------------
// Portable images
// ---------------------------------------------------------------------------

double round_half_away(double v) { return v < 0.0 ? std::ceil(v - 0.5) : std::floor(v + 0.5); }

void save_image(const fs::path& path, const Tensor& img) {
    if (img.shape.size() != 3 || (img.shape[2] != 1 && img.shape[2] != 3))
        throw InputError("save_image: expects (H, W, 1) or (H, W, 3)");
    auto os = open_out(path);
    const bool color = img.shape[2] == 3;
    os << (color ? "P6" : "P5") << "\n"
       << img.shape[1] << " " << img.shape[0] << "\n255\n";
    std::vector<unsigned char> bytes(img.numel());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] =
            static_cast<unsigned char>(std::clamp(round_half_away(img.data[i]), 0.0, 255.0));
    write_bytes(os, bytes.data(), bytes.size());
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_pnm_token(std::istream& is) {
    std::string tok;
    int ch;
    while ((ch = is.get()) != EOF) {
        if (ch == '#') {
            while ((ch = is.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw FormatError(FK::truncated, "pnm: truncated header");
    return tok;
}

}  // namespace

Tensor load_image(const fs::path& path) {
    auto is = open_in(path);
    std::string magic = next_pnm_token(is);
    if (magic != "P5" && magic != "P6")
        throw FormatError(FK::bad_magic, "pnm: expected P5 or P6");
    const std::size_t c = magic == "P6" ? 3 : 1;
    std::size_t w, h, maxval;
    try {
        w = std::stoul(next_pnm_token(is));
        h = std::stoul(next_pnm_token(is));
        maxval = std::stoul(next_pnm_token(is));
    } catch (const std::exception&) {
        throw FormatError(FK::malformed_header, "pnm: bad header field");
    }
    if (maxval != 255) throw FormatError(FK::malformed_header, "pnm: maxval must be 255");
    std::vector<unsigned char> bytes(h * w * c);
    read_bytes(is, bytes.data(), bytes.size(), "pnm");
    Tensor img({h, w, c});
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = static_cast<double>(bytes[i]);
    return img;
}

Tensor load_mask_pgm(const fs::path& path) {
    Tensor img = load_image(path);
    if (img.shape[2] != 1) throw InputError("mask must be a single-channel PGM");
    for (double& v : img.data) v = v != 0.0 ? 1.0 : 0.0;
    return img;
}

Tensor visualization_image(const Tensor& p) {
    Tensor img = p;
    for (double& v : img.data) v = std::clamp(round_half_away(10.0 * v + 128.0), 0.0, 255.0);
    return img;
}

Tensor adversarial_image(const Tensor& sample, const Tensor& p) {
    check_same_shape(sample, p, "adversarial_image");
    Tensor img = sample;
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = std::clamp(round_half_away(img.data[i] - p.data[i]), 0.0, 255.0);
    return img;
}

}  // namespace pertfool::io
