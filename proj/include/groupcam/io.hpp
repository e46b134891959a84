#pragma once

#include <map>
#include <string>
#include <vector>

#include "groupcam/finetune.hpp"
#include "groupcam/fixture.hpp"
#include "groupcam/saliency.hpp"
#include "groupcam/tensor.hpp"

namespace groupcam {

// ---- PNG (8-bit) ----------------------------------------------------------

void write_png_rgb(const std::string& path, const ImageTensor& img);
void write_png_gray(const std::string& path, const Map2D& m);  // values in [0,1]
// Any PNG (gray/rgb/rgba, 8/16-bit) to a 3 x H x W tensor in [0, 1].
ImageTensor read_png(const std::string& path);

// ---- Saliency grid: u32le height, u32le width, then h*w float32 ------------

void write_saliency_grid(const std::string& path, const Map2D& m);
Map2D read_saliency_grid(const std::string& path);

void write_saliency_sidecar(const std::string& path, const SaliencyMap& sal,
                            const GroupCamConfig& config);

// ---- Fixture dataset directory: images/<id>.png + index.json ---------------

struct DatasetEntry {
    std::string id;
    int label = 0;
    BBox bbox;
    std::string split;  // "train" | "holdout"
};

void save_fixture_dataset(const std::string& dir,
                          const std::vector<FixtureSample>& samples,
                          double holdout_fraction);

struct LoadedDataset {
    std::vector<FixtureSample> samples;
    std::vector<DatasetEntry> entries;  // aligned with samples
};
LoadedDataset load_fixture_dataset(const std::string& dir);

// Annotations keyed by image id: the fixture index shape
// {id: {label, bbox, ...}} or a COCO-style subset {id: [{category, bbox}]}.
std::map<std::string, std::vector<std::pair<std::string, BBox>>>
load_annotations(const std::string& path);

// ---- Reports ----------------------------------------------------------------

std::string finetune_report_to_json(const FinetuneReport& rep);
std::string train_report_to_json(const TrainReport& rep);

// ---- CSV (RFC 4180: CRLF line ends, minimal quoting) ------------------------

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();
    void row(const std::vector<std::string>& fields);
    static std::string num(double v);  // shortest round-trip representation

private:
    struct Impl;
    Impl* impl_;
};

}  // namespace groupcam
