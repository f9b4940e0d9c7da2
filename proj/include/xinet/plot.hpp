#pragma once

#include <string>

#include "xinet/data.hpp"

namespace xinet {

// Three stacked panels (original / gapped / reconstructed) as standalone SVG.
// The gap, when detectable in the gapped trace, is shaded in every panel.
std::string render_three_panel_svg(const Waveform& target, const Waveform& gapped,
                                   const Waveform& recon);

// index,target,gapped,recon rows for the same three traces.
std::string traces_csv(const Waveform& target, const Waveform& gapped, const Waveform& recon);

}  // namespace xinet
