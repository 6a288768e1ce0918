#include "ctn/skeleton.hpp"

#include <array>
#include <vector>

namespace ctn {

namespace {

// Euler characteristic deltas indexed by octant configuration.
const std::array<int, 256>& euler_lut() {
  static const std::array<int, 256> lut = [] {
    std::array<int, 256> t{};
    t[1] = 1;    t[3] = -1;   t[5] = -1;   t[7] = 1;    t[9] = -3;   t[11] = -1;
    t[13] = -1;  t[15] = 1;   t[17] = -1;  t[19] = 1;   t[21] = 1;   t[23] = -1;
    t[25] = 3;   t[27] = 1;   t[29] = 1;   t[31] = -1;  t[33] = -3;  t[35] = -1;
    t[37] = 3;   t[39] = 1;   t[41] = 1;   t[43] = -1;  t[45] = 3;   t[47] = 1;
    t[49] = -1;  t[51] = 1;   t[53] = 1;   t[55] = -1;  t[57] = 3;   t[59] = 1;
    t[61] = 1;   t[63] = -1;  t[65] = -3;  t[67] = 3;   t[69] = -1;  t[71] = 1;
    t[73] = 1;   t[75] = 3;   t[77] = -1;  t[79] = 1;   t[81] = -1;  t[83] = 1;
    t[85] = 1;   t[87] = -1;  t[89] = 3;   t[91] = 1;   t[93] = 1;   t[95] = -1;
    t[97] = 1;   t[99] = 3;   t[101] = 3;  t[103] = 1;  t[105] = 5;  t[107] = 3;
    t[109] = 3;  t[111] = 1;  t[113] = -1; t[115] = 1;  t[117] = 1;  t[119] = -1;
    t[121] = 3;  t[123] = 1;  t[125] = 1;  t[127] = -1; t[129] = -7; t[131] = -1;
    t[133] = -1; t[135] = 1;  t[137] = -3; t[139] = -1; t[141] = -1; t[143] = 1;
    t[145] = -1; t[147] = 1;  t[149] = 1;  t[151] = -1; t[153] = 3;  t[155] = 1;
    t[157] = 1;  t[159] = -1; t[161] = -3; t[163] = -1; t[165] = 3;  t[167] = 1;
    t[169] = 1;  t[171] = -1; t[173] = 3;  t[175] = 1;  t[177] = -1; t[179] = 1;
    t[181] = 1;  t[183] = -1; t[185] = 3;  t[187] = 1;  t[189] = 1;  t[191] = -1;
    t[193] = -3; t[195] = 3;  t[197] = -1; t[199] = 1;  t[201] = 1;  t[203] = 3;
    t[205] = -1; t[207] = 1;  t[209] = -1; t[211] = 1;  t[213] = 1;  t[215] = -1;
    t[217] = 3;  t[219] = 1;  t[221] = 1;  t[223] = -1; t[225] = 1;  t[227] = 3;
    t[229] = 3;  t[231] = 1;  t[233] = 5;  t[235] = 3;  t[237] = 3;  t[239] = 1;
    t[241] = -1; t[243] = 1;  t[245] = 1;  t[247] = -1; t[249] = 3;  t[251] = 1;
    t[253] = 1;  t[255] = -1;
    return t;
  }();
  return lut;
}

using Nbhd = std::array<uint8_t, 27>;  // index = 9*(dz+1) + 3*(dy+1) + (dx+1)

uint8_t index_octant_neb(const Nbhd& n) {
  uint8_t v = 1;
  if (n[2]) v |= 128;
  if (n[1]) v |= 64;
  if (n[11]) v |= 32;
  if (n[10]) v |= 16;
  if (n[5]) v |= 8;
  if (n[4]) v |= 4;
  if (n[14]) v |= 2;
  return v;
}

uint8_t index_octant_nwb(const Nbhd& n) {
  uint8_t v = 1;
  if (n[0]) v |= 128;
  if (n[9]) v |= 64;
  if (n[3]) v |= 32;
  if (n[12]) v |= 16;
  if (n[1]) v |= 8;
  if (n[10]) v |= 4;
  if (n[4]) v |= 2;
  return v;
}

uint8_t index_octant_seb(const Nbhd& n) {
  uint8_t v = 1;
  if (n[8]) v |= 128;
  if (n[7]) v |= 64;
  if (n[17]) v |= 32;
  if (n[16]) v |= 16;
  if (n[5]) v |= 8;
  if (n[4]) v |= 4;
  if (n[14]) v |= 2;
  return v;
}

uint8_t index_octant_swb(const Nbhd& n) {
  uint8_t v = 1;
  if (n[6]) v |= 128;
  if (n[15]) v |= 64;
  if (n[7]) v |= 32;
  if (n[16]) v |= 16;
  if (n[3]) v |= 8;
  if (n[12]) v |= 4;
  if (n[4]) v |= 2;
  return v;
}

uint8_t index_octant_neu(const Nbhd& n) {
  uint8_t v = 1;
  if (n[20]) v |= 128;
  if (n[23]) v |= 64;
  if (n[19]) v |= 32;
  if (n[22]) v |= 16;
  if (n[11]) v |= 8;
  if (n[14]) v |= 4;
  if (n[10]) v |= 2;
  return v;
}

uint8_t index_octant_nwu(const Nbhd& n) {
  uint8_t v = 1;
  if (n[18]) v |= 128;
  if (n[21]) v |= 64;
  if (n[9]) v |= 32;
  if (n[12]) v |= 16;
  if (n[19]) v |= 8;
  if (n[22]) v |= 4;
  if (n[10]) v |= 2;
  return v;
}

uint8_t index_octant_seu(const Nbhd& n) {
  uint8_t v = 1;
  if (n[26]) v |= 128;
  if (n[23]) v |= 64;
  if (n[17]) v |= 32;
  if (n[14]) v |= 16;
  if (n[25]) v |= 8;
  if (n[22]) v |= 4;
  if (n[16]) v |= 2;
  return v;
}

uint8_t index_octant_swu(const Nbhd& n) {
  uint8_t v = 1;
  if (n[24]) v |= 128;
  if (n[25]) v |= 64;
  if (n[15]) v |= 32;
  if (n[16]) v |= 16;
  if (n[21]) v |= 8;
  if (n[22]) v |= 4;
  if (n[12]) v |= 2;
  return v;
}

bool is_euler_invariant(const Nbhd& n) {
  const auto& lut = euler_lut();
  int euler = 0;
  euler += lut[index_octant_swu(n)];
  euler += lut[index_octant_seu(n)];
  euler += lut[index_octant_nwu(n)];
  euler += lut[index_octant_neu(n)];
  euler += lut[index_octant_swb(n)];
  euler += lut[index_octant_seb(n)];
  euler += lut[index_octant_nwb(n)];
  euler += lut[index_octant_neb(n)];
  return euler == 0;
}

// Flood a 26-component of the 26-neighborhood across the octant decomposition.
void octree_labeling(int octant, int label, std::array<int, 26>& cube) {
  if (octant == 1) {
    if (cube[0] == 1) cube[0] = label;
    if (cube[1] == 1) { cube[1] = label; octree_labeling(2, label, cube); }
    if (cube[3] == 1) { cube[3] = label; octree_labeling(3, label, cube); }
    if (cube[4] == 1) {
      cube[4] = label;
      octree_labeling(2, label, cube);
      octree_labeling(3, label, cube);
      octree_labeling(4, label, cube);
    }
    if (cube[9] == 1) { cube[9] = label; octree_labeling(5, label, cube); }
    if (cube[10] == 1) {
      cube[10] = label;
      octree_labeling(2, label, cube);
      octree_labeling(5, label, cube);
      octree_labeling(6, label, cube);
    }
    if (cube[12] == 1) {
      cube[12] = label;
      octree_labeling(3, label, cube);
      octree_labeling(5, label, cube);
      octree_labeling(7, label, cube);
    }
  }
  if (octant == 2) {
    if (cube[1] == 1) { cube[1] = label; octree_labeling(1, label, cube); }
    if (cube[4] == 1) {
      cube[4] = label;
      octree_labeling(1, label, cube);
      octree_labeling(3, label, cube);
      octree_labeling(4, label, cube);
    }
    if (cube[10] == 1) {
      cube[10] = label;
      octree_labeling(1, label, cube);
      octree_labeling(5, label, cube);
      octree_labeling(6, label, cube);
    }
    if (cube[2] == 1) cube[2] = label;
    if (cube[5] == 1) { cube[5] = label; octree_labeling(4, label, cube); }
    if (cube[11] == 1) { cube[11] = label; octree_labeling(6, label, cube); }
    if (cube[13] == 1) {
      cube[13] = label;
      octree_labeling(4, label, cube);
      octree_labeling(6, label, cube);
      octree_labeling(8, label, cube);
    }
  }
  if (octant == 3) {
    if (cube[3] == 1) { cube[3] = label; octree_labeling(1, label, cube); }
    if (cube[4] == 1) {
      cube[4] = label;
      octree_labeling(1, label, cube);
      octree_labeling(2, label, cube);
      octree_labeling(4, label, cube);
    }
    if (cube[12] == 1) {
      cube[12] = label;
      octree_labeling(1, label, cube);
      octree_labeling(5, label, cube);
      octree_labeling(7, label, cube);
    }
    if (cube[6] == 1) cube[6] = label;
    if (cube[7] == 1) { cube[7] = label; octree_labeling(4, label, cube); }
    if (cube[14] == 1) { cube[14] = label; octree_labeling(7, label, cube); }
    if (cube[15] == 1) {
      cube[15] = label;
      octree_labeling(4, label, cube);
      octree_labeling(7, label, cube);
      octree_labeling(8, label, cube);
    }
  }
  if (octant == 4) {
    if (cube[4] == 1) {
      cube[4] = label;
      octree_labeling(1, label, cube);
      octree_labeling(2, label, cube);
      octree_labeling(3, label, cube);
    }
    if (cube[5] == 1) { cube[5] = label; octree_labeling(2, label, cube); }
    if (cube[13] == 1) {
      cube[13] = label;
      octree_labeling(2, label, cube);
      octree_labeling(6, label, cube);
      octree_labeling(8, label, cube);
    }
    if (cube[7] == 1) { cube[7] = label; octree_labeling(3, label, cube); }
    if (cube[15] == 1) {
      cube[15] = label;
      octree_labeling(3, label, cube);
      octree_labeling(7, label, cube);
      octree_labeling(8, label, cube);
    }
    if (cube[8] == 1) cube[8] = label;
    if (cube[16] == 1) { cube[16] = label; octree_labeling(8, label, cube); }
  }
  if (octant == 5) {
    if (cube[9] == 1) { cube[9] = label; octree_labeling(1, label, cube); }
    if (cube[10] == 1) {
      cube[10] = label;
      octree_labeling(1, label, cube);
      octree_labeling(2, label, cube);
      octree_labeling(6, label, cube);
    }
    if (cube[12] == 1) {
      cube[12] = label;
      octree_labeling(1, label, cube);
      octree_labeling(3, label, cube);
      octree_labeling(7, label, cube);
    }
    if (cube[17] == 1) cube[17] = label;
    if (cube[18] == 1) { cube[18] = label; octree_labeling(6, label, cube); }
    if (cube[20] == 1) { cube[20] = label; octree_labeling(7, label, cube); }
    if (cube[21] == 1) {
      cube[21] = label;
      octree_labeling(6, label, cube);
      octree_labeling(7, label, cube);
      octree_labeling(8, label, cube);
    }
  }
  if (octant == 6) {
    if (cube[10] == 1) {
      cube[10] = label;
      octree_labeling(1, label, cube);
      octree_labeling(2, label, cube);
      octree_labeling(5, label, cube);
    }
    if (cube[11] == 1) { cube[11] = label; octree_labeling(2, label, cube); }
    if (cube[13] == 1) {
      cube[13] = label;
      octree_labeling(2, label, cube);
      octree_labeling(4, label, cube);
      octree_labeling(8, label, cube);
    }
    if (cube[18] == 1) { cube[18] = label; octree_labeling(5, label, cube); }
    if (cube[21] == 1) {
      cube[21] = label;
      octree_labeling(5, label, cube);
      octree_labeling(7, label, cube);
      octree_labeling(8, label, cube);
    }
    if (cube[19] == 1) cube[19] = label;
    if (cube[22] == 1) { cube[22] = label; octree_labeling(8, label, cube); }
  }
  if (octant == 7) {
    if (cube[12] == 1) {
      cube[12] = label;
      octree_labeling(1, label, cube);
      octree_labeling(3, label, cube);
      octree_labeling(5, label, cube);
    }
    if (cube[14] == 1) { cube[14] = label; octree_labeling(3, label, cube); }
    if (cube[15] == 1) {
      cube[15] = label;
      octree_labeling(3, label, cube);
      octree_labeling(4, label, cube);
      octree_labeling(8, label, cube);
    }
    if (cube[20] == 1) { cube[20] = label; octree_labeling(5, label, cube); }
    if (cube[21] == 1) {
      cube[21] = label;
      octree_labeling(5, label, cube);
      octree_labeling(6, label, cube);
      octree_labeling(8, label, cube);
    }
    if (cube[23] == 1) cube[23] = label;
    if (cube[24] == 1) { cube[24] = label; octree_labeling(8, label, cube); }
  }
  if (octant == 8) {
    if (cube[13] == 1) {
      cube[13] = label;
      octree_labeling(2, label, cube);
      octree_labeling(4, label, cube);
      octree_labeling(6, label, cube);
    }
    if (cube[15] == 1) {
      cube[15] = label;
      octree_labeling(3, label, cube);
      octree_labeling(4, label, cube);
      octree_labeling(7, label, cube);
    }
    if (cube[16] == 1) { cube[16] = label; octree_labeling(4, label, cube); }
    if (cube[21] == 1) {
      cube[21] = label;
      octree_labeling(5, label, cube);
      octree_labeling(6, label, cube);
      octree_labeling(7, label, cube);
    }
    if (cube[22] == 1) { cube[22] = label; octree_labeling(6, label, cube); }
    if (cube[24] == 1) { cube[24] = label; octree_labeling(7, label, cube); }
    if (cube[25] == 1) cube[25] = label;
  }
}

// A point is simple when its deletion keeps the foreground of the
// 26-neighborhood in a single 26-connected component.
bool is_simple_point(const Nbhd& neighbors) {
  std::array<int, 26> cube;
  for (int i = 0; i < 13; ++i) cube[i] = neighbors[i];
  for (int i = 14; i < 27; ++i) cube[i - 1] = neighbors[i];

  int label = 2;
  for (int i = 0; i < 26; ++i) {
    if (cube[i] != 1) continue;
    switch (i) {
      case 0: case 1: case 3: case 4: case 9: case 10: case 12:
        octree_labeling(1, label, cube);
        break;
      case 2: case 5: case 11: case 13:
        octree_labeling(2, label, cube);
        break;
      case 6: case 7: case 14: case 15:
        octree_labeling(3, label, cube);
        break;
      case 8: case 16:
        octree_labeling(4, label, cube);
        break;
      case 17: case 18: case 20: case 21:
        octree_labeling(5, label, cube);
        break;
      case 19: case 22:
        octree_labeling(6, label, cube);
        break;
      case 23: case 24:
        octree_labeling(7, label, cube);
        break;
      case 25:
        octree_labeling(8, label, cube);
        break;
    }
    ++label;
    if (label - 2 >= 2) return false;
  }
  // Exactly one component must remain: zero means the point is isolated and
  // deleting it would annihilate a component.
  return label - 2 == 1;
}

struct Grid {
  const std::array<int64_t, 3> shape;
  std::vector<uint8_t>& data;

  uint8_t get(int64_t z, int64_t y, int64_t x) const {
    if (z < 0 || z >= shape[0] || y < 0 || y >= shape[1] || x < 0 || x >= shape[2]) return 0;
    return data[(z * shape[1] + y) * shape[2] + x];
  }

  Nbhd neighborhood(int64_t z, int64_t y, int64_t x) const {
    Nbhd n;
    int i = 0;
    for (int64_t dz = -1; dz <= 1; ++dz)
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) n[i++] = get(z + dz, y + dy, x + dx);
    return n;
  }

  bool is_endpoint(int64_t z, int64_t y, int64_t x) const {
    const Nbhd n = neighborhood(z, y, x);
    int count = -1;  // exclude the center
    for (uint8_t v : n) count += (v != 0);
    return count == 1;
  }
};

}  // namespace

BinaryMask skeletonize(const BinaryMask& m) {
  BinaryMask out = m;
  for (auto& v : out.data) v = (v != 0);
  Grid g{out.shape, out.data};
  const auto [D, H, W] = out.shape;

  std::vector<std::array<int64_t, 3>> candidates;
  int unchanged_borders = 0;
  while (unchanged_borders < 6) {
    unchanged_borders = 0;
    for (int border = 1; border <= 6; ++border) {
      bool no_change = true;
      for (int64_t z = 0; z < D; ++z)
        for (int64_t y = 0; y < H; ++y)
          for (int64_t x = 0; x < W; ++x) {
            if (!g.get(z, y, x)) continue;
            bool is_border = false;
            switch (border) {
              case 1: is_border = !g.get(z, y - 1, x); break;  // N
              case 2: is_border = !g.get(z, y + 1, x); break;  // S
              case 3: is_border = !g.get(z, y, x + 1); break;  // E
              case 4: is_border = !g.get(z, y, x - 1); break;  // W
              case 5: is_border = !g.get(z + 1, y, x); break;  // U
              case 6: is_border = !g.get(z - 1, y, x); break;  // B
            }
            if (!is_border) continue;
            if (g.is_endpoint(z, y, x)) continue;
            const Nbhd n = g.neighborhood(z, y, x);
            if (!is_euler_invariant(n)) continue;
            if (!is_simple_point(n)) continue;
            candidates.push_back({z, y, x});
          }
      // Sequential recheck: earlier deletions can make a candidate unsafe.
      for (const auto& c : candidates) {
        if (is_simple_point(g.neighborhood(c[0], c[1], c[2]))) {
          out.at(c[0], c[1], c[2]) = 0;
          no_change = false;
        }
      }
      candidates.clear();
      if (no_change) ++unchanged_borders;
    }
  }
  return out;
}

}  // namespace ctn
