#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "causalcollab/eval_harness.hpp"

namespace causalcollab {

std::string results_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "axis_value,adjustment,embedding,split,fold,seed,mse\n";
  for (const auto& r : report.rows) {
    os << (r.axis_value ? format_double(*r.axis_value) : "") << ',' << to_string(r.spec.adjustment) << ','
       << to_string(r.spec.embedding) << ',' << to_string(r.split) << ',' << r.fold << ',' << r.seed << ','
       << format_double(r.mse) << '\n';
  }
  return os.str();
}

Json summary_json(const EvalReport& report) {
  const auto summary = report.summarize();
  auto stat = [](double m, double s) { return Json{{"mean", m}, {"sd", s}}; };
  Json points = Json::array();
  std::vector<std::optional<double>> order;
  for (const auto& m : summary)
    if (std::find(order.begin(), order.end(), m.axis_value) == order.end()) order.push_back(m.axis_value);
  for (const auto& v : order) {
    Json methods = Json::array();
    for (const auto& m : summary) {
      if (m.axis_value != v) continue;
      methods.push_back({{"method", m.spec.name()},
                         {"adjustment", to_string(m.spec.adjustment)},
                         {"embedding", to_string(m.spec.embedding)},
                         {"observational", stat(m.obs_mean, m.obs_sd)},
                         {"counterfactual", stat(m.cf_mean, m.cf_sd)},
                         {"gap", stat(m.gap_mean, m.gap_sd)},
                         {"constant_baseline_observational", m.constant_obs_mean}});
    }
    points.push_back({{"axis_value", v ? Json(*v) : Json(nullptr)}, {"methods", methods}});
  }
  Json j = Json::object();
  j["axis"] = report.axis ? Json(*report.axis) : Json(nullptr);
  j["points"] = points;
  j["provenance"] = report.provenance;
  return j;
}

namespace {

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::string sweep_svg(const EvalReport& report) {
  const auto summary = report.summarize();
  std::vector<BaselineSpec> specs;
  double xmin = INFINITY, xmax = -INFINITY, ymin = 0.0, ymax = 0.0;
  for (const auto& m : summary) {
    if (std::find(specs.begin(), specs.end(), m.spec) == specs.end()) specs.push_back(m.spec);
    const double x = m.axis_value.value_or(0.0);
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymax = std::max({ymax, m.obs_mean, m.cf_mean});
  }
  if (summary.empty()) xmin = xmax = 0.0;
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  ymax *= 1.1;

  const double W = 720, H = 440, L = 70, R = 200, Tm = 30, B = 60;
  const double pw = W - L - R, ph = H - Tm - B;
  auto X = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
  auto Y = [&](double y) { return Tm + ph - (y - ymin) / (ymax - ymin) * ph; };
  const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << Tm + ph << "\" x2=\"" << L + pw << "\" y2=\"" << Tm + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << Tm + ph << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0, xv = xmin + (xmax - xmin) * k / 4.0;
    os << "<text x=\"" << L - 8 << "\" y=\"" << fmt(Y(yv) + 4, "%.1f") << "\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
    os << "<text x=\"" << fmt(X(xv), "%.1f") << "\" y=\"" << Tm + ph + 18 << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
  }
  os << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << report.axis.value_or("axis") << "</text>\n";
  os << "<text x=\"18\" y=\"" << Tm + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << Tm + ph / 2 << ")\">MSE</text>\n";
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const char* color = palette[s % 6];
    for (int split = 0; split < 2; ++split) {
      std::ostringstream pts;
      for (const auto& m : summary)
        if (m.spec == specs[s])
          pts << fmt(X(m.axis_value.value_or(0.0)), "%.2f") << ',' << fmt(Y(split ? m.cf_mean : m.obs_mean), "%.2f") << ' ';
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"" << (split ? "" : " stroke-dasharray=\"5,4\"")
         << " points=\"" << pts.str() << "\"/>\n";
    }
    const double ly = Tm + 16.0 * static_cast<double>(s);
    os << "<line x1=\"" << L + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 40 << "\" y2=\"" << ly << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << L + pw + 46 << "\" y=\"" << ly + 4 << "\">" << specs[s].name() << "</text>\n";
  }
  const double ly = Tm + 16.0 * static_cast<double>(specs.size()) + 10;
  os << "<text x=\"" << L + pw + 15 << "\" y=\"" << ly << "\">solid: counterfactual</text>\n";
  os << "<text x=\"" << L + pw + 15 << "\" y=\"" << ly + 16 << "\">dashed: observational</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace causalcollab
