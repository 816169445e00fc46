macro_rules! example {
    ($name:ident, $file:literal) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $name() {
            $name::run().expect(concat!($file, " should run"));
        }
    };
}

example!(codec_tour, "codec_tour.rs");
example!(layout_matmul, "layout_matmul.rs");
example!(cache_locality, "cache_locality.rs");
example!(energy_sampling, "energy_sampling.rs");
example!(speedup_table, "speedup_table.rs");
example!(energy_vs_time, "energy_vs_time.rs");
example!(matrix_fixture, "matrix_fixture.rs");
example!(trace_dump, "trace_dump.rs");
