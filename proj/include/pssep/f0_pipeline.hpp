#pragma once

// Multi-F0 estimator output -> one F0 track per source, plus the CSV
// formats and the resampling onto the synthesis frame grid.
//
// Assignment runs in two passes. Frames with exactly J values are sorted
// (highest voice = source 0) on the assumption that voices do not cross.
// Every other voiced frame is matched against the nearest assigned frame of
// each source within +-W frames; the cheapest one-to-one matching in Hz wins.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pssep/dsp_core.hpp"
#include "pssep/error.hpp"
#include "pssep/synth_model.hpp"

namespace pssep::f0 {

inline constexpr std::size_t kSearchWindow = 50;

struct MultiF0Frame {
  double time = 0.0;
  std::vector<double> f0s;
};

// Tracks on the estimator's own time axis: tracks[j][i] belongs to times[i].
struct AssignedF0 {
  std::vector<double> times;
  std::vector<std::vector<double>> tracks;

  std::size_t num_sources() const { return tracks.size(); }
};

inline std::optional<double> hz_to_midi(double hz) {
  if (!(hz > 0.0)) return std::nullopt;
  return 69.0 + 12.0 * std::log2(hz / 440.0);
}

inline double midi_to_hz(double midi) { return 440.0 * std::exp2((midi - 69.0) / 12.0); }

namespace detail {

// Above any real pitch distance, so sources with a reference always win.
inline constexpr double kNoReference = 1e9;

struct Matching {
  std::vector<std::size_t> source_of;  // per kept value
  std::vector<std::size_t> value_of;   // per source, npos if none
  double cost = std::numeric_limits<double>::infinity();
};

// Exhaustive search over injective maps between values and sources. J and x
// are small (voices in a choir section), so this stays cheap. Candidates are
// enumerated in lexicographic source order and only a strictly lower cost
// replaces the incumbent, which breaks ties toward lower source indices.
inline void search(const std::vector<double>& values, const std::vector<double>& refs, std::size_t keep,
                   std::size_t pos, std::vector<std::size_t>& used_src, std::vector<std::size_t>& chosen_val,
                   std::vector<char>& src_taken, std::vector<char>& val_taken, double cost, Matching& best) {
  if (cost >= best.cost) return;
  if (pos == keep) {
    best.cost = cost;
    best.source_of = used_src;
    best.value_of.assign(refs.size(), std::string::npos);
    for (std::size_t i = 0; i < keep; ++i) best.value_of[used_src[i]] = chosen_val[i];
    return;
  }
  for (std::size_t v = 0; v < values.size(); ++v) {
    if (val_taken[v]) continue;
    // Values are considered in index order within each matching.
    if (pos > 0 && v < chosen_val[pos - 1]) continue;
    for (std::size_t j = 0; j < refs.size(); ++j) {
      if (src_taken[j]) continue;
      const double d = refs[j] > 0.0 ? std::abs(values[v] - refs[j]) : kNoReference;
      src_taken[j] = val_taken[v] = 1;
      used_src.push_back(j);
      chosen_val.push_back(v);
      search(values, refs, keep, pos + 1, used_src, chosen_val, src_taken, val_taken, cost + d, best);
      used_src.pop_back();
      chosen_val.pop_back();
      src_taken[j] = val_taken[v] = 0;
    }
  }
}

}  // namespace detail

// Assigns the per-frame F0 values to J sources. Non-positive values are
// treated as absent.
inline AssignedF0 assign_f0s(const std::vector<MultiF0Frame>& frames, std::size_t num_sources,
                             std::size_t window = kSearchWindow) {
  require(num_sources >= 1, "J must be >= 1");
  AssignedF0 out;
  out.tracks.assign(num_sources, std::vector<double>(frames.size(), 0.0));
  std::vector<std::vector<double>> values(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out.times.push_back(frames[i].time);
    for (double f : frames[i].f0s)
      if (f > 0.0 && std::isfinite(f)) values[i].push_back(f);
    std::sort(values[i].begin(), values[i].end(), std::greater<>());
  }

  std::vector<char> assigned(frames.size(), 0);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (values[i].size() != num_sources) continue;
    for (std::size_t j = 0; j < num_sources; ++j) out.tracks[j][i] = values[i][j];
    assigned[i] = 1;
  }

  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (assigned[i] || values[i].empty()) continue;
    // Reference per source: its value at the closest assigned frame where it
    // is voiced; the earlier frame wins at equal distance.
    std::vector<double> refs(num_sources, 0.0);
    for (std::size_t j = 0; j < num_sources; ++j) {
      for (std::size_t d = 1; d <= window; ++d) {
        if (d <= i && assigned[i - d] && out.tracks[j][i - d] > 0.0) {
          refs[j] = out.tracks[j][i - d];
          break;
        }
        if (i + d < frames.size() && assigned[i + d] && out.tracks[j][i + d] > 0.0) {
          refs[j] = out.tracks[j][i + d];
          break;
        }
      }
    }
    const auto& vals = values[i];
    const std::size_t keep = std::min(vals.size(), num_sources);
    const bool any_ref = std::any_of(refs.begin(), refs.end(), [](double r) { return r > 0.0; });
    if (!any_ref) {
      // Nothing to follow: highest values go to the lowest indices.
      for (std::size_t j = 0; j < keep; ++j) out.tracks[j][i] = vals[j];
    } else {
      detail::Matching best;
      std::vector<std::size_t> used_src, chosen_val;
      std::vector<char> src_taken(num_sources, 0), val_taken(vals.size(), 0);
      detail::search(vals, refs, keep, 0, used_src, chosen_val, src_taken, val_taken, 0.0, best);
      for (std::size_t j = 0; j < num_sources; ++j)
        if (best.value_of[j] != std::string::npos) out.tracks[j][i] = vals[best.value_of[j]];
    }
    assigned[i] = 1;
  }
  return out;
}

// Nearest-row lookup of each synthesis frame centre (n * hop + frame_len / 2);
// the earlier row wins ties. Outside the CSV's time span the edge rows hold.
inline std::vector<synth::F0Track> to_frame_grid(const AssignedF0& a, const synth::SynthConfig& cfg,
                                                 std::size_t length) {
  const std::size_t frames = dsp::model_frame_count(length, cfg.hop);
  std::vector<synth::F0Track> out(a.num_sources());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j].source_index = j;
    out[j].f0.assign(frames, 0.0);
  }
  if (a.times.empty()) return out;
  for (std::size_t i = 1; i < a.times.size(); ++i)
    require(a.times[i] >= a.times[i - 1], "F0 times must be non-decreasing");
  for (std::size_t n = 0; n < frames; ++n) {
    const double t = static_cast<double>(n * cfg.hop + cfg.frame_len / 2) / cfg.sample_rate;
    const auto it = std::lower_bound(a.times.begin(), a.times.end(), t);
    std::size_t row;
    if (it == a.times.begin()) {
      row = 0;
    } else if (it == a.times.end()) {
      row = a.times.size() - 1;
    } else {
      const auto hi = static_cast<std::size_t>(it - a.times.begin());
      row = (a.times[hi] - t < t - a.times[hi - 1]) ? hi : hi - 1;
    }
    for (std::size_t j = 0; j < out.size(); ++j) out[j].f0[n] = a.tracks[j][row];
  }
  return out;
}

// ---- CSV ----------------------------------------------------------------

enum class CsvLayout { raw, assigned };

struct F0Csv {
  CsvLayout layout = CsvLayout::raw;
  std::vector<MultiF0Frame> raw;  // raw layout
  AssignedF0 assigned;            // assigned layout
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return cells;
}

inline double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw Error(where + ": not a number: '" + s + "'");
}

}  // namespace detail

// Reads either layout. A header whose second column starts with `src` marks the
// assigned layout; anything else (or no header) is read as raw.
inline F0Csv parse_f0_csv(std::istream& in, const std::string& name = "F0 CSV") {
  F0Csv csv;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = detail::split_csv_line(line);
    const std::string where = name + ":" + std::to_string(line_no);
    if (first) {
      first = false;
      const bool header = !cells.empty() && cells[0] == "time";
      if (header) {
        if (cells.size() >= 2 && cells[1].rfind("src", 0) == 0) {
          csv.layout = CsvLayout::assigned;
          columns = cells.size();
          for (std::size_t j = 1; j < cells.size(); ++j)
            require(cells[j] == "src" + std::to_string(j - 1), where + ": expected column src" + std::to_string(j - 1));
          csv.assigned.tracks.resize(columns - 1);
        }
        continue;
      }
    }
    if (csv.layout == CsvLayout::assigned) {
      require(cells.size() == columns, where + ": expected " + std::to_string(columns) + " columns");
      csv.assigned.times.push_back(detail::parse_number(cells[0], where));
      for (std::size_t j = 1; j < columns; ++j) {
        const double v = detail::parse_number(cells[j], where);
        require(v >= 0.0, where + ": negative F0");
        csv.assigned.tracks[j - 1].push_back(v);
      }
    } else {
      MultiF0Frame f;
      f.time = detail::parse_number(cells.at(0), where);
      for (std::size_t c = 1; c < cells.size(); ++c)
        if (!cells[c].empty()) f.f0s.push_back(detail::parse_number(cells[c], where));
      csv.raw.push_back(std::move(f));
    }
  }
  return csv;
}

inline F0Csv read_f0_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open F0 CSV: " + path.string());
  return parse_f0_csv(in, path.string());
}

// Raw files are assigned to J sources; assigned files must already have J.
inline AssignedF0 load_assigned(const std::filesystem::path& path, std::size_t num_sources) {
  auto csv = read_f0_csv(path);
  if (csv.layout == CsvLayout::raw) return assign_f0s(csv.raw, num_sources);
  require(csv.assigned.num_sources() == num_sources,
          path.string() + ": has " + std::to_string(csv.assigned.num_sources()) + " source columns, expected " +
              std::to_string(num_sources));
  return csv.assigned;
}

inline void write_assigned_csv(std::ostream& out, const AssignedF0& a) {
  out << "time";
  for (std::size_t j = 0; j < a.num_sources(); ++j) out << ",src" << j;
  out << '\n';
  out.precision(10);
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    out << a.times[i];
    for (const auto& t : a.tracks) out << ',' << t[i];
    out << '\n';
  }
}

inline void write_assigned_csv(const std::filesystem::path& path, const AssignedF0& a) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write F0 CSV: " + path.string());
  write_assigned_csv(out, a);
}

// Frame-rate tracks back to the assigned layout, one row per frame centre.
inline AssignedF0 from_frame_grid(const std::vector<synth::F0Track>& tracks, const synth::SynthConfig& cfg) {
  AssignedF0 a;
  if (tracks.empty()) return a;
  for (std::size_t n = 0; n < tracks.front().f0.size(); ++n)
    a.times.push_back(static_cast<double>(n * cfg.hop + cfg.frame_len / 2) / cfg.sample_rate);
  for (const auto& t : tracks) a.tracks.push_back(t.f0);
  return a;
}

}  // namespace pssep::f0
