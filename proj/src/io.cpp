#include "groupcam/io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace groupcam {

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

namespace {

struct PngWriteCtx {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteCtx() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngReadCtx {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadCtx() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

std::uint8_t to_byte(double v) {
    const long b = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<std::uint8_t>(b);
}

void write_png_bytes(const std::string& path, const std::vector<std::uint8_t>& rows,
                     int width, int height, int color_type, int stride) {
    PngWriteCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error("cannot open for writing: " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info || setjmp(png_jmpbuf(ctx.png)))
        throw std::runtime_error("png write failed: " + path);

    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, width, height, 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    for (int y = 0; y < height; ++y)
        png_write_row(ctx.png, const_cast<png_bytep>(&rows[static_cast<size_t>(y) * stride]));
    png_write_end(ctx.png, nullptr);
}

}  // namespace

void write_png_rgb(const std::string& path, const ImageTensor& img) {
    require(img.channels == 3, "write_png_rgb: image must have 3 channels");
    const int h = img.height, w = img.width;
    const size_t plane = static_cast<size_t>(h) * w;
    std::vector<std::uint8_t> rows(plane * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t p = static_cast<size_t>(y) * w + x;
            rows[p * 3 + 0] = to_byte(img.data[0 * plane + p]);
            rows[p * 3 + 1] = to_byte(img.data[1 * plane + p]);
            rows[p * 3 + 2] = to_byte(img.data[2 * plane + p]);
        }
    write_png_bytes(path, rows, w, h, PNG_COLOR_TYPE_RGB, w * 3);
}

void write_png_gray(const std::string& path, const Map2D& m) {
    std::vector<std::uint8_t> rows(m.size());
    for (size_t i = 0; i < m.size(); ++i) rows[i] = to_byte(m.data[i]);
    write_png_bytes(path, rows, m.width, m.height, PNG_COLOR_TYPE_GRAY, m.width);
}

ImageTensor read_png(const std::string& path) {
    PngReadCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw std::runtime_error("cannot open image: " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info || setjmp(png_jmpbuf(ctx.png)))
        throw std::runtime_error("png read failed: " + path);

    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);

    // Normalize everything to 8-bit RGB.
    const png_byte color_type = png_get_color_type(ctx.png, ctx.info);
    const png_byte bit_depth = png_get_bit_depth(ctx.png, ctx.info);
    if (bit_depth == 16) png_set_strip_16(ctx.png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(ctx.png);
    if (color_type & PNG_COLOR_MASK_ALPHA ||
        png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS))
        png_set_strip_alpha(ctx.png);
    if (color_type == PNG_COLOR_TYPE_GRAY ||
        color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    const int w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    const int h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    const size_t stride = png_get_rowbytes(ctx.png, ctx.info);
    std::vector<std::uint8_t> rows(stride * h);
    for (int y = 0; y < h; ++y)
        png_read_row(ctx.png, &rows[static_cast<size_t>(y) * stride], nullptr);

    ImageTensor img(3, h, w);
    const size_t plane = static_cast<size_t>(h) * w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::uint8_t* px = &rows[static_cast<size_t>(y) * stride + x * 3];
            const size_t p = static_cast<size_t>(y) * w + x;
            img.data[0 * plane + p] = px[0] / 255.0;
            img.data[1 * plane + p] = px[1] / 255.0;
            img.data[2 * plane + p] = px[2] / 255.0;
        }
    return img;
}

// ---------------------------------------------------------------------------
// Saliency grid
// ---------------------------------------------------------------------------

void write_saliency_grid(const std::string& path, const Map2D& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(m.height),
                                   static_cast<std::uint32_t>(m.width)};
    f.write(reinterpret_cast<const char*>(dims), 8);
    std::vector<float> vals(m.size());
    for (size_t i = 0; i < m.size(); ++i) vals[i] = static_cast<float>(m.data[i]);
    f.write(reinterpret_cast<const char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(float)));
    if (!f) throw std::runtime_error("grid write failed: " + path);
}

Map2D read_saliency_grid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open grid: " + path);
    std::uint32_t dims[2];
    f.read(reinterpret_cast<char*>(dims), 8);
    if (!f || dims[0] == 0 || dims[1] == 0)
        throw std::runtime_error("bad grid header: " + path);
    Map2D m(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
    std::vector<float> vals(m.size());
    f.read(reinterpret_cast<char*>(vals.data()),
           static_cast<std::streamsize>(vals.size() * sizeof(float)));
    if (!f) throw std::runtime_error("grid truncated: " + path);
    for (size_t i = 0; i < m.size(); ++i) m.data[i] = vals[i];
    return m;
}

void write_saliency_sidecar(const std::string& path, const SaliencyMap& sal,
                            const GroupCamConfig& config) {
    json j;
    j["method"] = sal.method;
    j["class_index"] = sal.class_index;
    j["config"] = {{"groups", config.groups},
                   {"theta", config.theta},
                   {"denoise", config.denoise_enabled},
                   {"ksize", config.ksize},
                   {"sigma", config.sigma},
                   {"layer", config.layer_id}};
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Fixture dataset directory
// ---------------------------------------------------------------------------

namespace {
std::string sample_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    return buf;
}
}  // namespace

void save_fixture_dataset(const std::string& dir,
                          const std::vector<FixtureSample>& samples,
                          double holdout_fraction) {
    fs::create_directories(fs::path(dir) / "images");
    const int n = static_cast<int>(samples.size());
    const int holdout = std::max(1, static_cast<int>(n * holdout_fraction));

    json index = json::object();
    for (int i = 0; i < n; ++i) {
        const auto& s = samples[i];
        const std::string id = sample_id(i);
        write_png_rgb((fs::path(dir) / "images" / (id + ".png")).string(), s.image);
        index[id] = {{"label", s.label},
                     {"category", fixture_class_name(s.label)},
                     {"bbox", {s.bbox.x, s.bbox.y, s.bbox.w, s.bbox.h}},
                     {"split", i < n - holdout ? "train" : "holdout"}};
    }
    std::ofstream f(fs::path(dir) / "index.json");
    if (!f) throw std::runtime_error("cannot write dataset index in " + dir);
    f << index.dump(2) << "\n";
}

LoadedDataset load_fixture_dataset(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "index.json");
    if (!f) throw std::runtime_error("missing index.json in " + dir);
    json index = json::parse(f);

    LoadedDataset out;
    for (const auto& [id, meta] : index.items()) {
        DatasetEntry e;
        e.id = id;
        e.label = meta.at("label").get<int>();
        const auto& bb = meta.at("bbox");
        e.bbox = {bb[0].get<int>(), bb[1].get<int>(), bb[2].get<int>(), bb[3].get<int>()};
        e.split = meta.value("split", "train");

        FixtureSample s;
        s.image = read_png((fs::path(dir) / "images" / (id + ".png")).string());
        s.label = e.label;
        s.bbox = e.bbox;
        out.samples.push_back(std::move(s));
        out.entries.push_back(std::move(e));
    }
    return out;
}

std::map<std::string, std::vector<std::pair<std::string, BBox>>>
load_annotations(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open annotations: " + path);
    json j = json::parse(f);

    std::map<std::string, std::vector<std::pair<std::string, BBox>>> out;
    for (const auto& [id, val] : j.items()) {
        auto parse_box = [](const json& b) {
            return BBox{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(),
                        b[3].get<int>()};
        };
        if (val.is_array()) {  // COCO-style: [{category, bbox}, ...]
            for (const auto& ann : val)
                out[id].emplace_back(ann.at("category").get<std::string>(),
                                     parse_box(ann.at("bbox")));
        } else {  // fixture index entry
            const std::string cat =
                val.contains("category") ? val.at("category").get<std::string>()
                                         : fixture_class_name(val.at("label").get<int>());
            out[id].emplace_back(cat, parse_box(val.at("bbox")));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string finetune_report_to_json(const FinetuneReport& rep) {
    json j;
    j["seed"] = rep.seed;
    j["epochs"] = rep.epochs;
    j["initial_accuracy"] = rep.initial_accuracy;
    j["augmented"] = {{"train_loss", rep.augmented_train_loss},
                      {"holdout_accuracy", rep.augmented_accuracy}};
    j["control"] = {{"train_loss", rep.control_train_loss},
                    {"holdout_accuracy", rep.control_accuracy}};
    return j.dump(2) + "\n";
}

std::string train_report_to_json(const TrainReport& rep) {
    json j;
    j["seed"] = rep.seed;
    j["epochs_budget"] = rep.epochs;
    j["epochs_run"] = rep.epoch_losses.size();
    j["train_count"] = rep.train_count;
    j["holdout_count"] = rep.holdout_count;
    j["final_holdout_accuracy"] = rep.final_holdout_accuracy;
    j["epoch_loss"] = rep.epoch_losses;
    j["epoch_holdout_accuracy"] = rep.epoch_holdout_accuracy;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvWriter::Impl {
    std::ofstream f;
};

CsvWriter::CsvWriter(const std::string& path) : impl_(new Impl) {
    impl_->f.open(path, std::ios::binary);  // keep CRLF as written
    if (!impl_->f) {
        delete impl_;
        throw std::runtime_error("cannot open for writing: " + path);
    }
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
        const std::string& v = fields[i];
        const bool quote = v.find_first_of(",\"\r\n") != std::string::npos;
        if (i) impl_->f << ',';
        if (quote) {
            impl_->f << '"';
            for (char c : v) {
                if (c == '"') impl_->f << '"';
                impl_->f << c;
            }
            impl_->f << '"';
        } else {
            impl_->f << v;
        }
    }
    impl_->f << "\r\n";
}

std::string CsvWriter::num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace groupcam
