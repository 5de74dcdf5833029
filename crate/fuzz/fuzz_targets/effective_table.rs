#![no_main]

use hjlab::homog::EffectiveTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = EffectiveTable::read_csv(data) {
        let _ = table.lbar_at(&vec![0.0; table.dim]);
        let _ = table.convexity_violations();
        let mut out = Vec::new();
        table.write_csv(&mut out).unwrap();
        let again = EffectiveTable::read_csv(&out[..]).unwrap();
        assert_eq!(again.v, table.v);
        assert_eq!(again.lbar, table.lbar);
    }
});
