fn main() {
    pillarsim::cli::main()
}
