#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "spanclean/errors.h"
#include "spanclean/evaluation.h"

namespace spanclean {

namespace {

constexpr const char* kHeader = "sentence_id,start,end,label,aum,confidence,variability,is_positive";

void AppendDouble(std::string& out, double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw NumericError("cannot format value");
  out.append(buf, end);
}

template <typename T>
T ParseField(std::string_view field, size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError(line, "bad field '" + std::string(field) + "'");
  }
  return value;
}

std::string Format(const char* fmt, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), fmt, a, b);
  return buf;
}

}  // namespace

std::string WriteDatamapCsv(const std::vector<DynamicsRecord>& records) {
  std::string out = kHeader;
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.key.sentence_id) + ',' + std::to_string(r.key.start) + ',' +
           std::to_string(r.key.end) + ',' + std::to_string(r.assigned_label) + ',';
    AppendDouble(out, r.aum);
    out += ',';
    AppendDouble(out, r.confidence);
    out += ',';
    AppendDouble(out, r.variability);
    out += r.assigned_label > kNonEntity ? ",1\n" : ",0\n";
  }
  return out;
}

std::vector<DatamapRow> ParseDatamapCsv(std::string_view text) {
  std::vector<DatamapRow> rows;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kHeader) throw ParseError(line_no, "unexpected data-map header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    size_t start = 0;
    while (true) {
      size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 8) throw ParseError(line_no, "expected 8 fields");
    DatamapRow row;
    row.key = {ParseField<int>(fields[0], line_no), ParseField<int>(fields[1], line_no),
               ParseField<int>(fields[2], line_no)};
    row.label = ParseField<int>(fields[3], line_no);
    row.aum = ParseField<double>(fields[4], line_no);
    row.confidence = ParseField<double>(fields[5], line_no);
    row.variability = ParseField<double>(fields[6], line_no);
    row.is_positive = ParseField<int>(fields[7], line_no) != 0;
    rows.push_back(row);
  }
  return rows;
}

std::string RenderDatamapSvg(const std::vector<DynamicsRecord>& records) {
  constexpr double kWidth = 640, kHeight = 480, kLeft = 70, kRight = 20, kTop = 30,
                   kBottom = 60;
  constexpr double kMaxVariability = 0.5;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  std::string svg;
  svg += Format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n", kWidth,
      kHeight);
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += Format("<rect x=\"%.1f\" y=\"%.1f\" ", kLeft, kTop) +
         Format("width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n", plot_w,
                plot_h);
  for (int t = 0; t <= 5; ++t) {
    const double v = kMaxVariability * t / 5.0;
    const double x = kLeft + plot_w * t / 5.0;
    svg += Format("<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">", x,
                  kTop + plot_h + 16) +
           Format("%.2f</text>\n", v, 0);
    const double c = t / 5.0;
    const double y = kTop + plot_h * (1.0 - c);
    svg += Format("<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">", kLeft - 6,
                  y + 4) +
           Format("%.1f</text>\n", c, 0);
  }
  svg += Format("<text x=\"%.1f\" y=\"%.1f\" font-size=\"13\" text-anchor=\"middle\">variability</text>\n",
                kLeft + plot_w / 2, kHeight - 20);
  svg += Format("<text x=\"%.1f\" y=\"%.1f\" font-size=\"13\" text-anchor=\"middle\" ", 18,
                kTop + plot_h / 2) +
         Format("transform=\"rotate(-90 %.1f %.1f)\">confidence</text>\n", 18, kTop + plot_h / 2);

  if (!records.empty()) {
    std::vector<double> aums;
    aums.reserve(records.size());
    for (const auto& r : records) aums.push_back(r.aum);
    std::sort(aums.begin(), aums.end());
    const size_t m = aums.size();
    const double low_cut = aums[(m + 2) / 3 - 1];
    const double high_cut = aums[(2 * m + 2) / 3 - 1];
    for (const auto& r : records) {
      const char* color = r.aum <= low_cut ? "#d62728" : (r.aum <= high_cut ? "#ff7f0e" : "#1f77b4");
      const double x = kLeft + plot_w * std::clamp(r.variability / kMaxVariability, 0.0, 1.0);
      const double y = kTop + plot_h * (1.0 - std::clamp(r.confidence, 0.0, 1.0));
      svg += Format("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" ", x, y) + "fill=\"" + color +
             "\" fill-opacity=\"0.6\"/>\n";
    }
  }
  const char* legend[] = {"low AUM", "mid AUM", "high AUM"};
  const char* colors[] = {"#d62728", "#ff7f0e", "#1f77b4"};
  for (int i = 0; i < 3; ++i) {
    const double y = kTop + 14 + 16 * i;
    svg += Format("<circle cx=\"%.1f\" cy=\"%.1f\" r=\"4\" ", kLeft + plot_w - 80, y) +
           "fill=\"" + colors[i] + "\"/>\n";
    svg += Format("<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\">", kLeft + plot_w - 72, y + 4) +
           legend[i] + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void ExportDatamap(const std::vector<DynamicsRecord>& records,
                   const std::filesystem::path& prefix) {
  auto csv_path = prefix;
  csv_path += ".csv";
  auto svg_path = prefix;
  svg_path += ".svg";
  WriteTextFile(csv_path, WriteDatamapCsv(records));
  WriteTextFile(svg_path, RenderDatamapSvg(records));
}

}  // namespace spanclean
