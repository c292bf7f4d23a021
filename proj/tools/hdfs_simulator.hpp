#pragma once

// Synthetic block traces in the public HDFS benchmark layout. Each block
// follows the usual write pipeline (allocate, three replica receivers,
// packet responders, blockMap updates) with optional serve/verify/delete
// tails; a small fraction gets one of several fault patterns. Output files:
//
//   HDFS.log_templates.csv  EventId,EventTemplate
//   Event_traces.csv        BlockId,Label,Features   (Features = "[E5,E22,...]")
//   anomaly_label.csv       BlockId,Label            (Normal/Anomaly)
//
// Deterministic for a given seed.

#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace krone::sim {

struct Block {
  std::string id;
  std::vector<std::string> events;
  bool anomaly = false;
};

struct SimulatorOptions {
  std::size_t blocks = 10000;
  double anomaly_rate = 0.03;
  std::uint64_t seed = 7;
};

inline const std::vector<std::pair<std::string, std::string>>& hdfs_templates() {
  static const std::vector<std::pair<std::string, std::string>> t = {
      {"E1", "[*]Adding an already existing block[*]"},
      {"E2", "[*]Verification succeeded for[*]"},
      {"E3", "[*]Served block[*]to[*]"},
      {"E4", "[*]Got exception while serving[*]to[*]"},
      {"E5", "[*]Receiving block[*]src:[*]dest:[*]"},
      {"E6", "[*]Received block[*]src:[*]dest:[*]of size[*]"},
      {"E7", "[*]writeBlock[*]received exception[*]"},
      {"E8", "[*]PacketResponder[*]for block[*]Interrupted[*]"},
      {"E9", "[*]Received block[*]of size[*]from[*]"},
      {"E10", "[*]PacketResponder[*]Exception[*]"},
      {"E11", "[*]PacketResponder[*]for block[*]terminating[*]"},
      {"E12", "[*]:Exception writing block[*]to mirror[*]"},
      {"E13", "[*]Receiving empty packet for block[*]"},
      {"E14", "[*]Exception in receiveBlock for block[*]"},
      {"E15", "[*]Changing block file offset of block[*]from[*]to[*]meta file offset to[*]"},
      {"E16", "[*]:Transmitted block[*]to[*]"},
      {"E17", "[*]:Failed to transfer[*]to[*]got[*]"},
      {"E18", "[*]Starting thread to transfer block[*]to[*]"},
      {"E19", "[*]Reopen Block[*]"},
      {"E20", "[*]Unexpected error trying to delete block[*]BlockInfo not found in volumeMap[*]"},
      {"E21", "[*]Deleting block[*]file[*]"},
      {"E22", "[*]BLOCK* NameSystem[*]allocateBlock:[*]"},
      {"E23", "[*]BLOCK* NameSystem[*]delete:[*]is added to invalidSet of[*]"},
      {"E24", "[*]BLOCK* Removing block[*]from neededReplications as it does not belong to any file[*]"},
      {"E25", "[*]BLOCK* ask[*]to replicate[*]to[*]"},
      {"E26", "[*]BLOCK* NameSystem[*]addStoredBlock: blockMap updated:[*]is added to[*]size[*]"},
      {"E27", "[*]BLOCK* NameSystem[*]addStoredBlock: Redundant addStoredBlock request received for[*]on[*]size[*]"},
      {"E28", "[*]BLOCK* NameSystem[*]addStoredBlock: addStoredBlock request received for[*]on[*]size[*]But it does not belong to any file[*]"},
      {"E29", "[*]PendingReplicationMonitor timed out block[*]"},
  };
  return t;
}

class Simulator {
 public:
  explicit Simulator(SimulatorOptions opts) : opts_(opts), rng_(opts.seed) {}

  std::vector<Block> generate() {
    std::vector<Block> out;
    std::set<std::string> ids;
    out.reserve(opts_.blocks);
    while (out.size() < opts_.blocks) {
      Block b;
      do {
        b.id = "blk_" + std::to_string(static_cast<std::int64_t>(rng_()) / 1000);
      } while (!ids.insert(b.id).second);
      b.anomaly = chance(opts_.anomaly_rate);
      b.events = b.anomaly ? faulty() : normal();
      out.push_back(std::move(b));
    }
    return out;
  }

 private:
  using Events = std::vector<std::string>;

  bool chance(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  static void append(Events& e, std::initializer_list<const char*> more) {
    for (auto m : more) e.emplace_back(m);
  }

  void creation(Events& e) {
    const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    if (r < 0.5) append(e, {"E22", "E5", "E5", "E5"});
    else if (r < 0.8) append(e, {"E5", "E22", "E5", "E5"});
    else append(e, {"E5", "E5", "E22", "E5"});
  }

  void responders(Events& e, std::size_t replicas = 3) {
    for (std::size_t i = 0; i < replicas; ++i) {
      if (chance(0.1)) append(e, {"E9", "E11"});
      else append(e, {"E11", "E9"});
    }
  }

  void tail(Events& e) {
    if (chance(0.35)) {
      const std::size_t served = 1 + pick(3);
      for (std::size_t i = 0; i < served; ++i) e.emplace_back("E3");
    }
    if (chance(0.15)) e.emplace_back("E2");
    if (chance(0.25)) append(e, {"E23", "E23", "E23", "E21", "E21", "E21"});
  }

  Events normal() {
    Events e;
    creation(e);
    responders(e);
    append(e, {"E26", "E26", "E26"});
    tail(e);
    return e;
  }

  Events faulty() {
    Events e;
    switch (pick(8)) {
      case 0:  // write pipeline broken by a downstream exception
        creation(e);
        append(e, {"E7", "E10"});
        responders(e, 2);
        append(e, {"E26", "E26"});
        break;
      case 1:  // empty packet
        creation(e);
        responders(e, 2);
        append(e, {"E13", "E10", "E26", "E26"});
        break;
      case 2:  // delete of an unknown block
        e = normal();
        append(e, {"E23", "E21", "E20"});
        break;
      case 3:  // serving failure
        creation(e);
        responders(e);
        append(e, {"E26", "E26", "E26", "E3", "E4"});
        break;
      case 4:  // failed re-replication
        creation(e);
        responders(e);
        append(e, {"E26", "E26", "E26", "E25", "E18", "E17"});
        break;
      case 5:  // under-replicated and timed out
        creation(e);
        responders(e, 2);
        append(e, {"E26", "E26", "E29"});
        break;
      case 6:  // mirror write failure
        creation(e);
        append(e, {"E12", "E14"});
        responders(e, 2);
        append(e, {"E26", "E26"});
        break;
      default:  // allocation never logged; structurally looks normal
        append(e, {"E5", "E5", "E5"});
        responders(e);
        append(e, {"E26", "E26", "E26"});
        tail(e);
        break;
    }
    return e;
  }

  SimulatorOptions opts_;
  std::mt19937_64 rng_;
};

/// Writes the three benchmark files into `dir` (which must exist).
inline void write_layout(const std::string& dir, const std::vector<Block>& blocks) {
  {
    std::ofstream out(dir + "/HDFS.log_templates.csv");
    out << "EventId,EventTemplate\n";
    for (const auto& [id, text] : hdfs_templates()) out << id << ',' << text << '\n';
  }
  {
    std::ofstream out(dir + "/Event_traces.csv");
    out << "BlockId,Label,Features\n";
    for (const auto& b : blocks) {
      out << b.id << ',' << (b.anomaly ? "Fail" : "Success") << ",\"[";
      for (std::size_t i = 0; i < b.events.size(); ++i) out << (i ? "," : "") << b.events[i];
      out << "]\"\n";
    }
  }
  {
    std::ofstream out(dir + "/anomaly_label.csv");
    out << "BlockId,Label\n";
    for (const auto& b : blocks) out << b.id << ',' << (b.anomaly ? "Anomaly" : "Normal") << '\n';
  }
}

}  // namespace krone::sim
