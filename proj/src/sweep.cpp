#include "vsd/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "vsd/errors.hpp"

namespace vsd {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_hash(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ConfigError(what + ": cannot parse \"" + s + "\" as a number");
  return v;
}

}  // namespace

std::vector<int> sweep_deltas(const RunConfig& cfg) {
  std::vector<int> deltas;
  try {
    deltas = parse_int_list(cfg.sweep_deltas);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("sweep_deltas: ") + e.what());
  }
  std::string problems;
  if (deltas.empty()) problems += "sweep_deltas: must list at least one stride\n";
  std::set<int> seen;
  for (const int d : deltas) {
    if (d < 1) problems += "sweep_deltas: stride " + std::to_string(d) + " must be >= 1\n";
    if (!seen.insert(d).second)
      problems += "sweep_deltas: duplicate stride " + std::to_string(d) + "\n";
  }
  if (!problems.empty()) {
    problems.pop_back();
    throw ConfigError(problems);
  }
  return deltas;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows,
                     std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# config_hash=" << fmt_hash(config_hash) << '\n';
  out << "delta,miou,loss_final\n";
  for (const SweepRow& r : rows) {
    if (r.ok)
      out << r.delta << ',' << fmt_double(r.miou) << ',' << fmt_double(r.loss_final) << '\n';
    else
      out << r.delta << ",nan,nan\n";
  }
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path,
                                     std::uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  bool saw_header = false;
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# config_hash=";
      if (config_hash && line.rfind(key, 0) == 0) {
        const std::string hex = line.substr(key.size());
        std::uint64_t h = 0;
        const auto res = std::from_chars(hex.data(), hex.data() + hex.size(), h, 16);
        if (res.ec == std::errc{} && res.ptr == hex.data() + hex.size()) *config_hash = h;
      }
      continue;
    }
    if (!saw_header) {
      if (line != "delta,miou,loss_final")
        throw ConfigError(path.string() + ": expected header delta,miou,loss_final, got \"" +
                          line + "\"");
      saw_header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3)
      throw ConfigError(path.string() + ": expected 3 columns, got \"" + line + "\"");
    SweepRow r;
    int d = 0;
    const auto res = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), d);
    if (res.ec != std::errc{} || res.ptr != cells[0].data() + cells[0].size())
      throw ConfigError(path.string() + ": bad delta \"" + cells[0] + "\"");
    r.delta = d;
    r.miou = parse_double(cells[1], path.string());
    r.loss_final = parse_double(cells[2], path.string());
    r.ok = !std::isnan(r.miou) && !std::isnan(r.loss_final);
    rows.push_back(r);
  }
  if (!saw_header) throw ConfigError(path.string() + ": missing sweep header");
  return rows;
}

void write_sweep_plot(const std::filesystem::path& path, const std::vector<SweepRow>& rows,
                      std::uint64_t config_hash) {
  if (rows.empty()) throw NoData("sweep plot needs at least one row");
  const double width = 640, height = 420;
  const double ml = 70, mr = 30, mt = 40, mb = 60;
  const double pw = width - ml - mr, ph = height - mt - mb;

  std::vector<SweepRow> sorted = rows;
  std::sort(sorted.begin(), sorted.end(),
            [](const SweepRow& a, const SweepRow& b) { return a.delta < b.delta; });
  const int dmin = sorted.front().delta, dmax = sorted.back().delta;
  const auto x_of = [&](int d) {
    if (dmax == dmin) return ml + pw / 2;
    return ml + pw * (static_cast<double>(d - dmin) / (dmax - dmin));
  };
  const auto y_of = [&](double miou) { return mt + ph * (1.0 - miou); };

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_double(width)
      << "\" height=\"" << fmt_double(height) << "\" viewBox=\"0 0 " << fmt_double(width) << " "
      << fmt_double(height) << "\">\n";
  out << "<!-- config_hash=" << fmt_hash(config_hash) << " -->\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << fmt_double(width / 2) << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\" fill=\"black\">mIoU vs stride</text>\n";

  // axes
  out << "<line x1=\"" << fmt_double(ml) << "\" y1=\"" << fmt_double(mt) << "\" x2=\""
      << fmt_double(ml) << "\" y2=\"" << fmt_double(mt + ph) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << fmt_double(ml) << "\" y1=\"" << fmt_double(mt + ph) << "\" x2=\""
      << fmt_double(ml + pw) << "\" y2=\"" << fmt_double(mt + ph) << "\" stroke=\"black\"/>\n";

  // y ticks and gridlines at fixed quarters of [0, 1]
  for (int i = 0; i <= 4; ++i) {
    const double v = 0.25 * i;
    const double y = y_of(v);
    out << "<line x1=\"" << fmt_double(ml - 4) << "\" y1=\"" << fmt_double(y) << "\" x2=\""
        << fmt_double(ml) << "\" y2=\"" << fmt_double(y) << "\" stroke=\"black\"/>\n";
    if (i > 0)
      out << "<line x1=\"" << fmt_double(ml) << "\" y1=\"" << fmt_double(y) << "\" x2=\""
          << fmt_double(ml + pw) << "\" y2=\"" << fmt_double(y)
          << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << fmt_double(ml - 8) << "\" y=\"" << fmt_double(y + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" "
        << "fill=\"black\">" << fmt_double(v) << "</text>\n";
  }

  // x ticks at exactly the swept strides
  for (const SweepRow& r : sorted) {
    const double x = x_of(r.delta);
    out << "<line x1=\"" << fmt_double(x) << "\" y1=\"" << fmt_double(mt + ph) << "\" x2=\""
        << fmt_double(x) << "\" y2=\"" << fmt_double(mt + ph + 4) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fmt_double(x) << "\" y=\"" << fmt_double(mt + ph + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        << "fill=\"black\">" << r.delta << "</text>\n";
  }
  out << "<text x=\"" << fmt_double(ml + pw / 2) << "\" y=\"" << fmt_double(height - 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
      << "fill=\"black\">stride</text>\n";
  out << "<text x=\"20\" y=\"" << fmt_double(mt + ph / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" fill=\"black\" "
      << "transform=\"rotate(-90 20 " << fmt_double(mt + ph / 2) << ")\">mIoU</text>\n";

  // line through successful strides, then the point markers
  std::string points;
  for (const SweepRow& r : sorted) {
    if (!r.ok) continue;
    if (!points.empty()) points += ' ';
    points += fmt_double(x_of(r.delta)) + "," + fmt_double(y_of(r.miou));
  }
  if (!points.empty())
    out << "<polyline points=\"" << points
        << "\" fill=\"none\" stroke=\"#3465a4\" stroke-width=\"2\"/>\n";
  for (const SweepRow& r : sorted)
    if (r.ok)
      out << "<circle cx=\"" << fmt_double(x_of(r.delta)) << "\" cy=\""
          << fmt_double(y_of(r.miou)) << "\" r=\"4\" fill=\"#3465a4\"/>\n";

  out << "</svg>\n";
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

}  // namespace vsd
