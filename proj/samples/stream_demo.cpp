// Streams a synthetic tone through a small random model in 20 ms pushes
// and prints how much audio each push released.

#include <cmath>
#include <cstdio>

#include "chunkvc/chunkvc.hpp"

int main() {
  using namespace chunkvc;
  const ModelConfig cfg = ModelConfig::tiny(Setting::Full);
  const Model model = Model::build(cfg, init_weights(cfg, 42));

  StreamSession session(model, cfg.session);
  session.prepare_reference(noise_audio(16000, 1));

  PcmAudio tone;
  for (int i = 0; i < 8000; ++i) tone.samples.push_back(0.3f * float(std::sin(2.0 * M_PI * 220.0 * i / 16000.0)));

  std::size_t emitted = 0;
  for (std::size_t pos = 0; pos < tone.samples.size(); pos += 320) {
    PcmAudio slice;
    slice.samples.assign(tone.samples.begin() + long(pos), tone.samples.begin() + long(pos + 320));
    const PcmAudio out = session.push(slice);
    emitted += out.samples.size();
    std::printf("in %5zu  out %5zu\n", pos + 320, emitted);
  }
  emitted += session.flush().samples.size();
  std::printf("after flush: %zu of %zu samples\n", emitted, tone.samples.size());
  std::printf("%s", session.latency_report().to_text().c_str());
}
