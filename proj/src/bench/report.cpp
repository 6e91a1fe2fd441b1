#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xhm/bench.hpp"
#include "xhm/error.hpp"

namespace xhm {

namespace {

constexpr const char* kPairing =
    "# pairing: seeded shuffle of the test split; consecutive correctly classified images with different labels "
    "form (source, target); label-flipped samples are excluded from summary rows";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class CsvFile {
 public:
  CsvFile(const std::filesystem::path& path, const ExperimentConfig& config) : path_(path), out_(path) {
    if (!out_) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
    out_ << "# config: " << config_json(config).dump() << "\n" << kPairing << "\n";
  }
  ~CsvFile() noexcept(false) {
    out_.flush();
    if (!out_ && std::uncaught_exceptions() == 0) throw Error(Errc::io, "failed writing " + path_.string());
  }
  std::ofstream& out() { return out_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

void summary_cells(std::ostream& out, const FieldSummary& s) { out << "," << num(s.mean) << "," << num(s.standard_error); }

void sample_cells(std::ostream& out, const SampleRecord& r) {
  out << "," << num(r.delta_pcc) << "," << num(r.delta_topk) << "," << num(r.delta_mse) << "," << num(r.pcc) << ","
      << num(r.topk) << "," << num(r.mse) << "," << num(r.image_mse) << "," << (r.label_preserved ? 1 : 0) << "\n";
}

constexpr const char* kSampleColumns = "delta_pcc,delta_topk,delta_mse,pcc,topk,mse,image_mse,label_preserved\n";
constexpr const char* kSummaryColumns =
    "n,delta_pcc_mean,delta_pcc_se,delta_topk_mean,delta_topk_se,delta_mse_mean,delta_mse_se,image_mse_mean,"
    "image_mse_se,label_flips\n";

void summary_row(std::ostream& out, const MetricReport& r) {
  out << "," << r.preserved_count();
  summary_cells(out, r.field(&SampleRecord::delta_pcc));
  summary_cells(out, r.field(&SampleRecord::delta_topk));
  summary_cells(out, r.field(&SampleRecord::delta_mse));
  summary_cells(out, r.field(&SampleRecord::image_mse));
  out << "," << r.samples.size() - r.preserved_count() << "\n";
}

}  // namespace

void write_transfer_csv(const TransferMatrix& m, const ExperimentConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    CsvFile f(dir / "transfer_matrix.csv", config);
    f.out() << "attacked,evaluated," << kSummaryColumns;
    for (std::size_t a = 0; a < m.methods.size(); ++a)
      for (std::size_t b = 0; b < m.methods.size(); ++b) {
        f.out() << m.methods[a] << "," << m.methods[b];
        summary_row(f.out(), m.report(a, b));
      }
  }
  CsvFile f(dir / "transfer_samples.csv", config);
  f.out() << "pair,source,target,attacked,evaluated," << kSampleColumns;
  for (std::size_t a = 0; a < m.methods.size(); ++a)
    for (std::size_t b = 0; b < m.methods.size(); ++b)
      for (std::size_t p = 0; p < m.pairs.size(); ++p) {
        f.out() << p << "," << m.pairs[p].source << "," << m.pairs[p].target << "," << m.methods[a] << ","
                << m.methods[b];
        sample_cells(f.out(), m.records[a][b][p]);
      }
}

void write_robustness_csv(const RobustnessTable& t, const ExperimentConfig& config,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    CsvFile f(dir / "aggregate_robustness.csv", config);
    f.out() << "method," << kSummaryColumns;
    for (std::size_t a = 0; a < t.methods.size(); ++a) {
      f.out() << t.methods[a];
      summary_row(f.out(), t.reports[a]);
    }
  }
  CsvFile f(dir / "aggregate_samples.csv", config);
  f.out() << "pair,source,target,method," << kSampleColumns;
  for (std::size_t a = 0; a < t.methods.size(); ++a)
    for (std::size_t p = 0; p < t.pairs.size(); ++p) {
      f.out() << p << "," << t.pairs[p].source << "," << t.pairs[p].target << "," << t.methods[a];
      sample_cells(f.out(), t.reports[a].samples[p]);
    }
}

void write_blank_square_csv(const BlankSquareTable& t, const ExperimentConfig& config,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    CsvFile f(dir / "blank_square.csv", config);
    f.out() << "method,n,before_mean,after_mean,ratio_mean,ratio_se,image_mse_mean,label_flips\n";
    for (std::size_t a = 0; a < t.methods.size(); ++a) {
      std::size_t flips = 0;
      for (const auto& r : t.records[a]) flips += !r.label_preserved;
      f.out() << t.methods[a] << "," << t.records[a].size() - flips << ","
              << num(t.field(a, &BlankSquareRecord::before).mean) << ","
              << num(t.field(a, &BlankSquareRecord::after).mean);
      summary_cells(f.out(), t.field(a, &BlankSquareRecord::ratio));
      f.out() << "," << num(t.field(a, &BlankSquareRecord::image_mse).mean) << "," << flips << "\n";
    }
  }
  CsvFile f(dir / "blank_square_samples.csv", config);
  f.out() << "sample,index,method,before,after,ratio,image_mse,label_preserved\n";
  for (std::size_t a = 0; a < t.methods.size(); ++a)
    for (std::size_t s = 0; s < t.samples.size(); ++s) {
      const BlankSquareRecord& r = t.records[a][s];
      f.out() << s << "," << t.samples[s] << "," << t.methods[a] << "," << num(r.before) << "," << num(r.after) << ","
              << num(r.ratio) << "," << num(r.image_mse) << "," << (r.label_preserved ? 1 : 0) << "\n";
    }
}

}  // namespace xhm
