#include "spn/svg.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spn/common.hpp"

namespace spn {

SvgBuilder::SvgBuilder(int width, int height)
    : width_(width), height_(height) {}

namespace {

std::string escape_text(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) { return format_double(v); }

}  // namespace

void SvgBuilder::line(double x1, double y1, double x2, double y2,
                      const std::string& stroke, double width,
                      const std::string& dash) {
  std::ostringstream e;
  e << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\""
    << num(x2) << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke
    << "\" stroke-width=\"" << num(width) << "\"";
  if (!dash.empty()) e << " stroke-dasharray=\"" << dash << "\"";
  e << "/>";
  elements_.push_back(e.str());
}

void SvgBuilder::polyline(const std::vector<std::pair<double, double>>& points,
                          const std::string& stroke, double width,
                          const std::string& dash) {
  std::ostringstream e;
  e << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\""
    << num(width) << "\"";
  if (!dash.empty()) e << " stroke-dasharray=\"" << dash << "\"";
  e << " points=\"";
  for (size_t i = 0; i < points.size(); ++i) {
    if (i) e << ' ';
    e << num(points[i].first) << ',' << num(points[i].second);
  }
  e << "\"/>";
  elements_.push_back(e.str());
}

void SvgBuilder::circle(double cx, double cy, double r,
                        const std::string& fill) {
  std::ostringstream e;
  e << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\""
    << num(r) << "\" fill=\"" << fill << "\"/>";
  elements_.push_back(e.str());
}

void SvgBuilder::rect(double x, double y, double w, double h,
                      const std::string& fill) {
  std::ostringstream e;
  e << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\""
    << num(w) << "\" height=\"" << num(h) << "\" fill=\"" << fill << "\"/>";
  elements_.push_back(e.str());
}

void SvgBuilder::text(double x, double y, const std::string& content,
                      int size, const std::string& anchor) {
  std::ostringstream e;
  e << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\""
    << size << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor
    << "\">" << escape_text(content) << "</text>";
  elements_.push_back(e.str());
}

std::string SvgBuilder::str() const {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_
      << "\" height=\"" << height_ << "\" viewBox=\"0 0 " << width_ << ' '
      << height_ << "\">\n";
  for (const auto& e : elements_) out << "  " << e << '\n';
  out << "</svg>\n";
  return out.str();
}

void SvgBuilder::save(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write SVG '" + path + "'");
  out << str();
}

}  // namespace spn
