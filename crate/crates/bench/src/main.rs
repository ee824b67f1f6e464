fn main() {
    std::process::exit(cdfilter_bench::cli::main(std::env::args_os()));
}
