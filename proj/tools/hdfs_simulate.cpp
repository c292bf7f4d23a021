// Writes a synthetic trace set in the public HDFS benchmark layout, for
// exercising `krone convert-hdfs` without the real benchmark download.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "hdfs_simulator.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate HDFS-layout synthetic block traces"};
  std::string out_dir;
  krone::sim::SimulatorOptions opts;
  app.add_option("--out-dir", out_dir, "Output directory")->required();
  app.add_option("--blocks", opts.blocks, "Number of blocks")->check(CLI::PositiveNumber);
  app.add_option("--anomaly-rate", opts.anomaly_rate, "Fraction of faulty blocks")->check(CLI::Range(0.0, 1.0));
  app.add_option("--seed", opts.seed, "RNG seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  std::filesystem::create_directories(out_dir);
  krone::sim::Simulator sim(opts);
  const auto blocks = sim.generate();
  krone::sim::write_layout(out_dir, blocks);
  std::size_t anomalies = 0;
  for (const auto& b : blocks) anomalies += b.anomaly;
  std::cout << "wrote " << blocks.size() << " blocks (" << anomalies << " anomalous) to " << out_dir << "\n";
  return 0;
}
