#include "attnreg/data/dataset.hpp"

#include "attnreg/util/png_io.hpp"

#include <json.hpp>

#include <fstream>

namespace attnreg::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSplitNames[3] = {"paired", "weak", "val"};

void save_list(const std::vector<ImageSample>& list, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
  for (const auto& s : list) {
    json rec;
    rec["id"] = s.id;
    rec["image_path"] = s.id + ".png";
    util::write_png_gray((dir / (s.id + ".png")).string(), s.image);
    if (s.fragment_mask) {
      rec["fragment_mask_path"] = s.id + "_frag.png";
      util::write_png_mask((dir / (s.id + "_frag.png")).string(), *s.fragment_mask);
    }
    if (s.embryo_mask) {
      rec["embryo_mask_path"] = s.id + "_embryo.png";
      util::write_png_mask((dir / (s.id + "_embryo.png")).string(), *s.embryo_mask);
    }
    if (!s.grade) throw std::invalid_argument("sample '" + s.id + "' has no grade to store");
    rec["grade"] = std::string(1, grading::grade_letter(*s.grade));
    if (s.ratio)
      rec["ratio"] = *s.ratio;
    else
      rec["ratio"] = nullptr;
    manifest << rec.dump() << "\n";
  }
}

std::vector<ImageSample> load_list(const fs::path& dir) {
  std::vector<ImageSample> out;
  std::ifstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw std::runtime_error("missing manifest in " + dir.string());
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    ImageSample s;
    s.id = rec.at("id").get<std::string>();
    s.image = util::read_png_gray((dir / rec.at("image_path").get<std::string>()).string());
    if (rec.contains("fragment_mask_path"))
      s.fragment_mask =
          util::read_png_mask((dir / rec.at("fragment_mask_path").get<std::string>()).string());
    if (rec.contains("embryo_mask_path"))
      s.embryo_mask =
          util::read_png_mask((dir / rec.at("embryo_mask_path").get<std::string>()).string());
    const auto grade_str = rec.at("grade").get<std::string>();
    if (grade_str.size() != 1) throw std::runtime_error("bad grade in manifest: " + grade_str);
    s.grade = grading::grade_from_letter(grade_str[0]);
    if (!rec.at("ratio").is_null()) s.ratio = rec.at("ratio").get<double>();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void save_split(const DatasetSplit& split, const fs::path& dir) {
  validate_split(split);
  save_list(split.paired, dir / kSplitNames[0]);
  save_list(split.weak, dir / kSplitNames[1]);
  save_list(split.val, dir / kSplitNames[2]);
}

DatasetSplit load_split(const fs::path& dir) {
  for (const char* name : kSplitNames)
    if (!fs::exists(dir / name / "manifest.jsonl"))
      throw std::runtime_error("not a dataset directory (missing " + (dir / name).string() +
                               "/manifest.jsonl)");
  DatasetSplit split;
  split.paired = load_list(dir / kSplitNames[0]);
  split.weak = load_list(dir / kSplitNames[1]);
  split.val = load_list(dir / kSplitNames[2]);
  validate_split(split);
  return split;
}

}  // namespace attnreg::data
