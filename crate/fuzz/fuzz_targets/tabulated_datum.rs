#![no_main]

use hjlab::hj::InitialDatum;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(datum) = InitialDatum::parse_tabulated(data) {
        let _ = datum.eval(&[0.0]);
        let mut out = Vec::new();
        datum.write_tabulated(&mut out).unwrap();
        assert_eq!(InitialDatum::parse_tabulated(&out[..]).unwrap(), datum);
    }
});
