fn main() {
    std::process::exit(ppsc_gossip::harness::cli::run());
}
