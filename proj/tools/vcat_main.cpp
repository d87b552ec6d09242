int main() { return 0; }
// full CLI arrives with the cli module
