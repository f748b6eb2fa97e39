#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

// Frozen reference ranking for a 36-counter core-counter bench: channel name
// and the per-channel detection F-score measured for it. Deliberately kept
// in the original bench order (not sorted) so ranking code has to do the
// sorting itself. The known top three, by F-score:
//   LLC_Miss (0.8416), ICACHE.Hit (0.8137), ICACHE.Miss (0.7979).
inline const std::vector<std::pair<std::string, double>>&
counter_ranking_fixture() {
  static const std::vector<std::pair<std::string, double>> rows = {
      {"Dtlb_Load_Misses.Miss_Causes_A_Walk", 0.5657},
      {"Dtlb_Load_Misses.Walk_Completed_4K", 0.5226},
      {"Dtlb_Load_Misses.Walk_Completed", 0.5327},
      {"Dtlb_Load_Misses.Walk_STLB_Hit_4K", 0.3627},
      {"UOPS_Issued_Any", 0.3663},
      {"ICACHE.Hit", 0.8137},
      {"ICACHE.Miss", 0.7979},
      {"L1D_Pend_Miss.Pending", 0.6818},
      {"L1D_Pend_Miss.Request_FB_Full", 0.6698},
      {"L1D.Replacement", 0.7523},
      {"L2_Rqsts_Lat_Cache.Miss", 0.6244},
      {"LLC_Miss", 0.8416},
      {"LLC_Reference", 0.6167},
      {"IDQ.Mite_UOPS", 0.3383},
      {"BR_Inst_Exec.Nontaken_Cond.", 0.2703},
      {"BR_Inst_Exec.Taken_Cond.", 0.3390},
      {"BR_Inst_Exec.Taken_Direct_Jmp", 0.3455},
      {"BR_Inst_Exec.Taken_Indirect_Jmp_Non_Call_Ret", 0.3137},
      {"BR_Inst_Exec.Taken_Indirect_Near_Return", 0.2944},
      {"BR_Inst_Exec.Taken_Direct_Near_Call", 0.3618},
      {"BR_Inst_Exec.Taken_Indirect_Near_Call", 0.3592},
      {"BR_Inst_Exec.All_Cond.", 0.2634},
      {"BR_Inst_Exec.All_Direct_Jmp", 0.3238},
      {"BR_Misp_Exec.Nontaken_Cond.", 0.3648},
      {"BR_Misp_Exec.Taken_Cond.", 0.4510},
      {"BR_Misp_Exec.Taken_Indirect_Jmp_Non_Call_Ret", 0.4455},
      {"BR_Misp_Exec.Taken_Ret_Near", 0.3491},
      {"BR_Misp_Exec.Taken_Indirect_Near_Call", 0.3553},
      {"BR_Misp_Exec.All_Branches", 0.2700},
      {"BR_Inst_Retired.Cond.", 0.4623},
      {"BR_Inst_Retired.Not_Taken", 0.4412},
      {"BR_Inst_Retired.Far_Branch", 0.4608},
      {"BR_Misp_Retired.All_Branch", 0.4615},
      {"BR_Misp_Retired.Cond.", 0.3786},
      {"BR_Misp_Retired.All_Branches_Pebs", 0.2111},
      {"BR_Misp_Retired.Near_Taken", 0.2871},
  };
  return rows;
}
