// SPDX-License-Identifier: Apache-2.0
#include "protomm/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace protomm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void write_f32_le(std::ostream& out, const Eigen::MatrixXf& block) {
  // timestep-major: t0c0 t0c1 ... t1c0 ...
  std::vector<float> buf(static_cast<std::size_t>(block.size()));
  std::size_t k = 0;
  for (Eigen::Index t = 0; t < block.rows(); ++t) {
    for (Eigen::Index c = 0; c < block.cols(); ++c) buf[k++] = block(t, c);
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : buf) {
      auto u = std::bit_cast<std::uint32_t>(v);
      u = __builtin_bswap32(u);
      v = std::bit_cast<float>(u);
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Eigen::MatrixXf read_f32_le(std::istream& in, int rows, int cols) {
  std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw Error("record file truncated");
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : buf) {
      auto u = std::bit_cast<std::uint32_t>(v);
      u = __builtin_bswap32(u);
      v = std::bit_cast<float>(u);
    }
  }
  Eigen::MatrixXf m(rows, cols);
  std::size_t k = 0;
  for (int t = 0; t < rows; ++t) {
    for (int c = 0; c < cols; ++c) m(t, c) = buf[k++];
  }
  return m;
}

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), issp));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), issp).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  return out;
}

// WESAD questionnaire times are written as minutes.seconds (7.08 = 7 min 8 s).
double minutes_dot_seconds(const std::string& cell) {
  const double v = std::stod(cell);
  const double minutes = std::floor(v);
  const double seconds = std::round((v - minutes) * 100.0);
  return minutes * 60.0 + seconds;
}

std::vector<fs::path> subject_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error("dataset root '" + root.string() + "' is not a directory");
  std::vector<fs::path> dirs;
  static const std::regex pat("S[0-9]+");
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && std::regex_match(e.path().filename().string(), pat)) {
      dirs.push_back(e.path());
    }
  }
  std::sort(dirs.begin(), dirs.end(), [](const fs::path& a, const fs::path& b) {
    return std::stoi(a.filename().string().substr(1)) < std::stoi(b.filename().string().substr(1));
  });
  return dirs;
}

MultimodalStream slice_stream(const std::map<Modality, TimeSeriesWindow>& full, double begin_s,
                              double end_s, const std::string& subject) {
  MultimodalStream out;
  out.subject_id = subject;
  out.start_s = begin_s;
  for (const auto& [m, w] : full) {
    const int first = std::clamp(static_cast<int>(std::lround(begin_s * w.sample_rate_hz)), 0,
                                 w.length());
    const int last = std::clamp(static_cast<int>(std::lround(end_s * w.sample_rate_hz)), first,
                                w.length());
    TimeSeriesWindow cut;
    cut.modality = m;
    cut.sample_rate_hz = w.sample_rate_hz;
    cut.samples = w.samples.middleRows(first, last - first);
    out.channels.emplace(m, std::move(cut));
  }
  return out;
}

std::map<Modality, TimeSeriesWindow> load_e4_pair(const fs::path& dir, double target_hz) {
  std::map<Modality, TimeSeriesWindow> out;
  out.emplace(Modality::PPG, resample(read_e4_csv(dir / "BVP.csv", Modality::PPG), target_hz));
  out.emplace(Modality::ACCEL, resample(read_e4_csv(dir / "ACC.csv", Modality::ACCEL), target_hz));
  return out;
}

constexpr double kTargetHz = 50.0;

}  // namespace

fs::path records_path_for(const fs::path& json_path) {
  auto p = json_path;
  p.replace_extension(".bin");
  return p;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& json_path) {
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  std::ofstream bin(records_path_for(json_path), std::ios::binary);
  if (!bin) throw Error("cannot open '" + records_path_for(json_path).string() + "' for writing");

  json samples = json::array();
  std::uint64_t offset = 0;
  for (const auto& sp : manifest.samples) {
    const auto& s = *sp;
    json entry;
    entry["subject_id"] = s.subject_id;
    entry["window_start_s"] = s.window_start_s;
    entry["label"] = s.label ? json(*s.label) : json(nullptr);
    entry["target"] = s.target ? json(*s.target) : json(nullptr);
    entry["offset"] = offset;
    json wins = json::array();
    for (const auto& [m, w] : s.windows) {
      wins.push_back({{"modality", to_string(m)},
                      {"T", w.length()},
                      {"C", w.channels()},
                      {"sample_rate_hz", w.sample_rate_hz}});
      write_f32_le(bin, w.samples);
      offset += static_cast<std::uint64_t>(w.samples.size()) * sizeof(float);
    }
    entry["windows"] = std::move(wins);
    samples.push_back(std::move(entry));
  }

  json doc;
  doc["samples"] = std::move(samples);
  doc["split"] = to_string(manifest.split);
  doc["task"] = to_string(manifest.task);
  doc["sample_rate_hz"] = manifest.sample_rate_hz;
  std::ofstream js(json_path);
  if (!js) throw Error("cannot open '" + json_path.string() + "' for writing");
  js << doc.dump(1) << '\n';
}

DatasetManifest read_manifest(const fs::path& json_path) {
  std::ifstream js(json_path);
  if (!js) throw Error("cannot open manifest '" + json_path.string() + "'");
  json doc = json::parse(js);
  std::ifstream bin(records_path_for(json_path), std::ios::binary);
  if (!bin) throw Error("cannot open records '" + records_path_for(json_path).string() + "'");

  DatasetManifest out;
  out.split = split_from_string(doc.at("split").get<std::string>());
  out.task = task_from_string(doc.at("task").get<std::string>());
  out.sample_rate_hz = doc.at("sample_rate_hz").get<double>();
  for (const auto& e : doc.at("samples")) {
    auto s = std::make_shared<MultimodalSample>();
    s->subject_id = e.at("subject_id").get<std::string>();
    s->window_start_s = e.at("window_start_s").get<double>();
    if (!e.at("label").is_null()) s->label = e.at("label").get<std::string>();
    if (e.contains("target") && !e.at("target").is_null()) s->target = e.at("target").get<double>();
    bin.seekg(static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    for (const auto& w : e.at("windows")) {
      TimeSeriesWindow win;
      win.modality = modality_from_string(w.at("modality").get<std::string>());
      win.sample_rate_hz = w.at("sample_rate_hz").get<double>();
      win.samples = read_f32_le(bin, w.at("T").get<int>(), w.at("C").get<int>());
      s->windows.emplace(win.modality, std::move(win));
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

TimeSeriesWindow read_e4_csv(const fs::path& path, Modality modality, double* start_unix_s) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  const int channels = channels_for(modality);
  std::string line;
  std::vector<std::vector<std::string>> header;
  for (int i = 0; i < 2; ++i) {
    if (!std::getline(in, line)) throw Error("'" + path.string() + "' is missing its E4 header");
    header.push_back(split(line, ','));
  }
  if (start_unix_s) *start_unix_s = std::stod(header[0].at(0));
  TimeSeriesWindow w;
  w.modality = modality;
  w.sample_rate_hz = std::stod(header[1].at(0));
  std::vector<float> values;
  while (std::getline(in, line)) {
    auto cells = split(line, ',');
    if (cells.empty() || cells[0].empty()) continue;
    if (static_cast<int>(cells.size()) < channels) {
      throw Error("'" + path.string() + "' row has " + std::to_string(cells.size()) + " columns");
    }
    for (int c = 0; c < channels; ++c) values.push_back(std::stof(cells[c]));
  }
  const int t = static_cast<int>(values.size()) / channels;
  w.samples.resize(t, channels);
  for (int i = 0; i < t; ++i) {
    for (int c = 0; c < channels; ++c) w.samples(i, c) = values[static_cast<std::size_t>(i) * channels + c];
  }
  // E4 accelerometer counts are 1/64 g
  if (modality == Modality::ACCEL) w.samples /= 64.0f;
  if (!w.all_finite()) throw Error("'" + path.string() + "' contains non-finite values");
  return w;
}

DatasetManifest load_wesad(const fs::path& root, Task task) {
  if (task != Task::stress2 && task != Task::stress4) {
    throw Error("load_wesad supports tasks stress2 and stress4");
  }
  DatasetManifest out;
  out.task = task;
  out.split = Split::train;
  out.sample_rate_hz = kTargetHz;

  for (const auto& dir : subject_dirs(root)) {
    const std::string subject = dir.filename().string();
    const fs::path e4 = dir / (subject + "_E4_Data");
    const fs::path quest = dir / (subject + "_quest.csv");
    if (!fs::exists(e4 / "BVP.csv") || !fs::exists(e4 / "ACC.csv") || !fs::exists(quest)) {
      spdlog::warn("load_wesad: skipping {} (missing E4 or questionnaire files)", subject);
      continue;
    }
    const auto full = load_e4_pair(e4, kTargetHz);

    std::ifstream q(quest);
    std::string line;
    std::vector<std::string> order, start, end;
    while (std::getline(q, line)) {
      auto cells = split(line, ';');
      if (cells.empty()) continue;
      if (cells[0] == "# ORDER") order.assign(cells.begin() + 1, cells.end());
      if (cells[0] == "# START") start.assign(cells.begin() + 1, cells.end());
      if (cells[0] == "# END") end.assign(cells.begin() + 1, cells.end());
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      const std::string& code = order[i];
      if (code.empty()) continue;
      std::string label;
      if (code == "Base") {
        label = labels::kBaseline;
      } else if (code == "TSST") {
        label = labels::kStress;
      } else if (code == "Fun") {
        label = labels::kAmusement;
      } else if (code.rfind("Medi", 0) == 0) {
        label = labels::kMeditation;
      } else if (code == "sRead" || code == "fRead" || code == "bRead") {
        continue;  // reading sessions are not part of either task
      } else {
        throw Error("load_wesad: unknown session code '" + code + "' in " + quest.string());
      }
      if (task == Task::stress2) {
        if (label == labels::kMeditation) continue;
        if (label != labels::kStress) label = labels::kNonStress;
      }
      if (i >= start.size() || i >= end.size() || start[i].empty() || end[i].empty()) {
        throw Error("load_wesad: session '" + code + "' lacks start/end in " + quest.string());
      }
      const double b = minutes_dot_seconds(start[i]);
      const double e = minutes_dot_seconds(end[i]);
      auto stream = slice_stream(full, b, e, subject);
      for (auto& s : segment_stream(stream, 60.0, 60.0)) {
        s.label = label;
        out.samples.push_back(std::make_shared<MultimodalSample>(std::move(s)));
      }
    }
  }
  return out;
}

DatasetManifest load_dalia(const fs::path& root, Task task) {
  if (task != Task::activity9 && task != Task::hr_regression) {
    throw Error("load_dalia supports tasks activity9 and hr_regression");
  }
  DatasetManifest out;
  out.task = task;
  out.split = Split::train;
  out.sample_rate_hz = kTargetHz;

  static const std::map<std::string, std::string> kActivityNames = {
      {"BASELINE", "SITTING"}, {"SITTING", "SITTING"},   {"STAIRS", "STAIRS"},
      {"SOCCER", "TABLE_SOCCER"}, {"TABLE_SOCCER", "TABLE_SOCCER"}, {"CYCLING", "CYCLING"},
      {"DRIVING", "DRIVING"},   {"LUNCH", "LUNCH"},       {"WALKING", "WALKING"},
      {"WORKING", "WORKING"},   {"NO_ACTIVITY", labels::kTransient},
      {"TRANSIENT", labels::kTransient}};

  for (const auto& dir : subject_dirs(root)) {
    const std::string subject = dir.filename().string();
    const fs::path e4 = dir / (subject + "_E4");
    const fs::path activity = dir / (subject + "_activity.csv");
    const fs::path hr = dir / (subject + "_hr.csv");
    const bool need_hr = task == Task::hr_regression;
    if (!fs::exists(e4 / "BVP.csv") || !fs::exists(e4 / "ACC.csv") ||
        (!need_hr && !fs::exists(activity)) || (need_hr && !fs::exists(hr))) {
      spdlog::warn("load_dalia: skipping {} (missing E4, activity or heart-rate files)", subject);
      continue;
    }
    MultimodalStream stream;
    stream.subject_id = subject;
    stream.channels = load_e4_pair(e4, kTargetHz);
    auto windows = segment_stream(stream, 8.0, 2.0);

    if (need_hr) {
      std::ifstream in(hr);
      std::string line;
      std::vector<double> bpm;
      while (std::getline(in, line)) {
        line = trim(line);
        if (!line.empty() && line[0] != '#') bpm.push_back(std::stod(line));
      }
      const std::size_t n = std::min(bpm.size(), windows.size());
      for (std::size_t i = 0; i < n; ++i) {
        if (!(bpm[i] > 0.0)) throw Error("load_dalia: non-positive heart rate in " + hr.string());
        windows[i].target = bpm[i];
        out.samples.push_back(std::make_shared<MultimodalSample>(std::move(windows[i])));
      }
      continue;
    }

    // "# NAME, start_s" rows; each activity runs until the next row begins.
    std::ifstream in(activity);
    std::string line;
    std::vector<std::pair<double, std::string>> marks;
    while (std::getline(in, line)) {
      auto cells = split(line, ',');
      if (cells.size() < 2 || cells[0].rfind('#', 0) != 0) continue;
      std::string name = trim(cells[0].substr(1));
      std::transform(name.begin(), name.end(), name.begin(), ::toupper);
      std::replace(name.begin(), name.end(), ' ', '_');
      if (name == "SUBJECT_ID") continue;
      auto it = kActivityNames.find(name);
      if (it == kActivityNames.end()) {
        throw Error("load_dalia: unknown activity code '" + name + "' in " + activity.string());
      }
      marks.emplace_back(std::stod(cells[1]), it->second);
    }
    std::sort(marks.begin(), marks.end());
    for (auto& w : windows) {
      const double mid = w.window_start_s + 4.0;
      std::string label = labels::kTransient;
      for (const auto& [t, name] : marks) {
        if (t <= mid) label = name;
      }
      w.label = label;
      out.samples.push_back(std::make_shared<MultimodalSample>(std::move(w)));
    }
  }
  return out;
}

}  // namespace protomm
